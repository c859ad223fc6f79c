// Apache License, Version 2.0, refer to LICENSE.txt

#include "otb/polybasis.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "otb/parallel.hpp"
#include "otb/util.hpp"

namespace otb {

using nlohmann::json;

namespace {
constexpr double kConditionLimit = 1e12;

void emit_indices(int dim, int remaining, int pos, std::vector<int>& cur,
                  std::vector<MultiIndex>& out) {
  if (pos == dim - 1) {
    cur[static_cast<std::size_t>(pos)] = remaining;
    out.push_back(MultiIndex{cur});
    return;
  }
  for (int v = 0; v <= remaining; ++v) {
    cur[static_cast<std::size_t>(pos)] = v;
    emit_indices(dim, remaining - v, pos + 1, cur, out);
  }
}
}  // namespace

std::vector<MultiIndex> enumerate_multi_indices(int dim, int max_total_degree) {
  if (dim < 1) throw Error("enumerate_multi_indices: dim must be >= 1");
  if (max_total_degree < 0) throw DegreeTooLow("enumerate_multi_indices: negative degree");
  std::vector<MultiIndex> out;
  std::vector<int> cur(static_cast<std::size_t>(dim), 0);
  for (int t = 0; t <= max_total_degree; ++t) emit_indices(dim, t, 0, cur, out);
  return out;
}

BasisSpec BasisSpec::classical(std::vector<Family1d> families, int max_total_degree) {
  BasisSpec s;
  s.dim_ = static_cast<int>(families.size());
  s.max_total_degree_ = max_total_degree;
  s.families_ = std::move(families);
  s.indices_ = enumerate_multi_indices(s.dim_, max_total_degree);
  for (const auto& f : s.families_) {
    if (f.kind == FamilyKind::Empirical)
      throw Error("classical BasisSpec cannot hold empirical families");
    if (!(f.scale > 0.0)) throw Error("family scale must be positive");
  }
  return s;
}

BasisSpec BasisSpec::empirical(Vec shift, Vec scale, int max_total_degree, Mat transform) {
  BasisSpec s;
  s.dim_ = static_cast<int>(shift.size());
  s.max_total_degree_ = max_total_degree;
  s.indices_ = enumerate_multi_indices(s.dim_, max_total_degree);
  const int K = s.K();
  if (transform.rows() != K || transform.cols() != K)
    throw Error("empirical transform has wrong shape");
  s.families_.resize(static_cast<std::size_t>(s.dim_));
  for (int a = 0; a < s.dim_; ++a) {
    s.families_[static_cast<std::size_t>(a)] =
        Family1d{FamilyKind::Empirical, shift[a], scale[a], 0.0};
  }
  s.transform_ = std::move(transform);
  return s;
}

int BasisSpec::linear_index(int a) const {
  // grade-1 block sits right after the constant, in ascending lex order:
  // (0,...,0,1) first, (1,0,...,0) last, so e_a is at 1 + (dim-1-a)
  if (max_total_degree_ < 1) throw DegreeTooLow("basis has no linear span");
  return 1 + (dim_ - 1 - a);
}

namespace {
// Per-dimension tables of phi_k(u(x)) and d/dx phi_k for k = 0..p.
void family_tables(const Family1d& f, double x, int p, std::vector<double>& val,
                   std::vector<double>& der) {
  const double u = (x - f.shift) / f.scale;
  const double du = 1.0 / f.scale;
  val.assign(static_cast<std::size_t>(p) + 1, 0.0);
  der.assign(static_cast<std::size_t>(p) + 1, 0.0);
  switch (f.kind) {
    case FamilyKind::Hermite: {
      val[0] = 1.0;
      if (p >= 1) val[1] = u;
      for (int k = 2; k <= p; ++k)
        val[static_cast<std::size_t>(k)] =
            (u * val[static_cast<std::size_t>(k - 1)] -
             std::sqrt(double(k - 1)) * val[static_cast<std::size_t>(k - 2)]) /
            std::sqrt(double(k));
      for (int k = 1; k <= p; ++k)
        der[static_cast<std::size_t>(k)] =
            std::sqrt(double(k)) * val[static_cast<std::size_t>(k - 1)] * du;
      break;
    }
    case FamilyKind::Legendre: {
      std::vector<double> P(static_cast<std::size_t>(p) + 1, 0.0);
      std::vector<double> Pd(static_cast<std::size_t>(p) + 1, 0.0);
      P[0] = 1.0;
      if (p >= 1) {
        P[1] = u;
        Pd[1] = 1.0;
      }
      for (int k = 2; k <= p; ++k) {
        P[static_cast<std::size_t>(k)] =
            ((2.0 * k - 1.0) * u * P[static_cast<std::size_t>(k - 1)] -
             (k - 1.0) * P[static_cast<std::size_t>(k - 2)]) /
            double(k);
        Pd[static_cast<std::size_t>(k)] =
            Pd[static_cast<std::size_t>(k - 2)] +
            (2.0 * k - 1.0) * P[static_cast<std::size_t>(k - 1)];
      }
      for (int k = 0; k <= p; ++k) {
        const double c = std::sqrt(2.0 * k + 1.0);
        val[static_cast<std::size_t>(k)] = c * P[static_cast<std::size_t>(k)];
        der[static_cast<std::size_t>(k)] = c * Pd[static_cast<std::size_t>(k)] * du;
      }
      break;
    }
    case FamilyKind::Laguerre: {
      const double al = f.alpha;
      std::vector<double> L(static_cast<std::size_t>(p) + 1, 0.0);
      std::vector<double> M(static_cast<std::size_t>(p) + 1, 0.0);  // weight alpha + 1
      L[0] = 1.0;
      M[0] = 1.0;
      if (p >= 1) {
        L[1] = 1.0 + al - u;
        M[1] = 2.0 + al - u;
      }
      for (int k = 2; k <= p; ++k) {
        L[static_cast<std::size_t>(k)] =
            ((2.0 * (k - 1) + 1.0 + al - u) * L[static_cast<std::size_t>(k - 1)] -
             (k - 1.0 + al) * L[static_cast<std::size_t>(k - 2)]) /
            double(k);
        M[static_cast<std::size_t>(k)] =
            ((2.0 * (k - 1) + 2.0 + al - u) * M[static_cast<std::size_t>(k - 1)] -
             (k + al) * M[static_cast<std::size_t>(k - 2)]) /
            double(k);
      }
      double c = 1.0;  // sqrt(k! Gamma(alpha+1) / Gamma(k+alpha+1))
      for (int k = 0; k <= p; ++k) {
        if (k > 0) c *= std::sqrt(double(k) / (al + k));
        val[static_cast<std::size_t>(k)] = c * L[static_cast<std::size_t>(k)];
        // d/du L_k^{(alpha)} = -L_{k-1}^{(alpha+1)}
        if (k > 0)
          der[static_cast<std::size_t>(k)] = -c * M[static_cast<std::size_t>(k - 1)] * du;
      }
      break;
    }
    case FamilyKind::Empirical: {
      // raw monomial powers; the joint transform is applied by the caller
      val[0] = 1.0;
      for (int k = 1; k <= p; ++k)
        val[static_cast<std::size_t>(k)] = val[static_cast<std::size_t>(k - 1)] * u;
      for (int k = 1; k <= p; ++k)
        der[static_cast<std::size_t>(k)] =
            double(k) * val[static_cast<std::size_t>(k - 1)] * du;
      break;
    }
  }
}
}  // namespace

BasisEval BasisSpec::eval(VecRef x) const {
  require_finite(x, "eval_basis");
  if (x.size() != dim_) throw Error("eval_basis: dimension mismatch");
  const int K = this->K();
  const int p = max_total_degree_;

  std::vector<std::vector<double>> val(static_cast<std::size_t>(dim_));
  std::vector<std::vector<double>> der(static_cast<std::size_t>(dim_));
  for (int a = 0; a < dim_; ++a)
    family_tables(families_[static_cast<std::size_t>(a)], x[a], p,
                  val[static_cast<std::size_t>(a)], der[static_cast<std::size_t>(a)]);

  BasisEval out;
  out.phi.resize(K);
  out.jac.setZero(K, dim_);
  for (int i = 0; i < K; ++i) {
    const auto& mi = indices_[static_cast<std::size_t>(i)].j;
    double prod = 1.0;
    for (int a = 0; a < dim_; ++a)
      prod *= val[static_cast<std::size_t>(a)][static_cast<std::size_t>(mi[static_cast<std::size_t>(a)])];
    out.phi[i] = prod;
    for (int a = 0; a < dim_; ++a) {
      double dprod = 1.0;
      for (int b = 0; b < dim_; ++b) {
        const int jb = mi[static_cast<std::size_t>(b)];
        dprod *= (b == a) ? der[static_cast<std::size_t>(b)][static_cast<std::size_t>(jb)]
                          : val[static_cast<std::size_t>(b)][static_cast<std::size_t>(jb)];
      }
      out.jac(i, a) = dprod;
    }
  }
  if (is_empirical()) {
    out.phi = transform_ * out.phi;
    out.jac = transform_ * out.jac;
  }
  return out;
}

Mat BasisSpec::identity_rows() const {
  if (max_total_degree_ < 1)
    throw DegreeTooLow("identity map needs degree >= 1");
  const int K = this->K();
  Mat E = Mat::Zero(dim_, K);
  if (is_empirical()) {
    // x_a = shift_a + scale_a * u_a in monomial coordinates, then m = R^-1 phi
    Mat Em = Mat::Zero(dim_, K);
    for (int a = 0; a < dim_; ++a) {
      Em(a, 0) = families_[static_cast<std::size_t>(a)].shift;
      Em(a, linear_index(a)) = families_[static_cast<std::size_t>(a)].scale;
    }
    E = transform_.triangularView<Eigen::Lower>()
            .transpose()
            .solve(Em.transpose())
            .transpose();
    return E;
  }
  for (int a = 0; a < dim_; ++a) {
    const Family1d& f = families_[static_cast<std::size_t>(a)];
    double c0 = 0.0, c1 = 0.0;
    switch (f.kind) {
      case FamilyKind::Hermite:
        c0 = f.shift;
        c1 = f.scale;
        break;
      case FamilyKind::Legendre:
        // phi_1(u) = sqrt(3) u
        c0 = f.shift;
        c1 = f.scale / std::sqrt(3.0);
        break;
      case FamilyKind::Laguerre: {
        // phi_1(u) = (alpha + 1 - u) / sqrt(alpha + 1)
        const double a1 = f.alpha + 1.0;
        c0 = f.shift + f.scale * a1;
        c1 = -f.scale * std::sqrt(a1);
        break;
      }
      case FamilyKind::Empirical:
        break;
    }
    E(a, 0) += c0;
    E(a, linear_index(a)) += c1;
  }
  return E;
}

BasisEval eval_basis(const BasisSpec& spec, VecRef x) { return spec.eval(x); }

Mat orthonormality_gram(const BasisSpec& spec, const SampleSet& samples) {
  const std::size_t n = samples.n();
  if (n == 0) throw EmptySampleSet("orthonormality_gram: no samples");
  if (samples.dim() != spec.dim())
    throw Error("orthonormality_gram: dimension mismatch");
  const int K = spec.K();
  Mat G = par::blocked_reduce(
      n, Mat(Mat::Zero(K, K)),
      [&](std::size_t b, std::size_t e, Mat& acc) {
        for (std::size_t i = b; i < e; ++i) {
          Vec phi = spec.eval(samples.row(i)).phi;
          acc.noalias() += phi * phi.transpose();
        }
      });
  return G / static_cast<double>(n);
}

BasisSpec gram_schmidt_empirical(const SampleSet& samples, int max_total_degree) {
  const std::size_t n = samples.n();
  if (n == 0) throw EmptySampleSet("gram_schmidt_empirical: no samples");
  const int d = samples.dim();
  auto indices = enumerate_multi_indices(d, max_total_degree);
  const int K = static_cast<int>(indices.size());
  if (static_cast<int>(n) < K)
    throw RankDeficient("gram_schmidt_empirical: fewer samples than basis functions");

  Vec shift(d), scale(d);
  for (int a = 0; a < d; ++a) {
    const double mean = samples.X.col(a).mean();
    const double var =
        (samples.X.col(a).array() - mean).square().sum() / static_cast<double>(n);
    shift[a] = mean;
    scale[a] = std::sqrt(std::max(var, 0.0));
    if (!(scale[a] > 1e-12))
      throw RankDeficient("gram_schmidt_empirical: degenerate coordinate " +
                          std::to_string(a + 1));
  }

  // raw-monomial spec reuses the evaluation path with an identity transform
  BasisSpec raw = BasisSpec::empirical(shift, scale, max_total_degree,
                                       Mat::Identity(K, K));
  Mat G = par::blocked_reduce(
      n, Mat(Mat::Zero(K, K)),
      [&](std::size_t b, std::size_t e, Mat& acc) {
        for (std::size_t i = b; i < e; ++i) {
          Vec m = raw.eval(samples.row(i)).phi;
          acc.noalias() += m * m.transpose();
        }
      });
  G /= static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Mat> es(G);
  const double emin = es.eigenvalues().minCoeff();
  const double emax = es.eigenvalues().maxCoeff();
  if (!(emin > 0.0) || emax / emin > kConditionLimit)
    throw RankDeficient("gram_schmidt_empirical: moment matrix condition exceeds 1e12");

  Eigen::LLT<Mat> llt(G);
  if (llt.info() != Eigen::Success)
    throw RankDeficient("gram_schmidt_empirical: moment matrix not positive definite");
  Mat L = llt.matrixL();
  Mat R = L.triangularView<Eigen::Lower>().solve(Mat::Identity(K, K));
  return BasisSpec::empirical(shift, scale, max_total_degree, R);
}

namespace {
std::string kind_name(FamilyKind k) {
  switch (k) {
    case FamilyKind::Hermite: return "hermite";
    case FamilyKind::Legendre: return "legendre";
    case FamilyKind::Laguerre: return "laguerre";
    case FamilyKind::Empirical: return "empirical";
  }
  return "?";
}

FamilyKind kind_from_name(const std::string& s) {
  if (s == "hermite") return FamilyKind::Hermite;
  if (s == "legendre") return FamilyKind::Legendre;
  if (s == "laguerre") return FamilyKind::Laguerre;
  if (s == "empirical") return FamilyKind::Empirical;
  throw FormatVersionMismatch("unknown family kind '" + s + "'");
}
}  // namespace

json BasisSpec::to_json() const {
  json j;
  j["dim"] = dim_;
  j["max_total_degree"] = max_total_degree_;
  json fams = json::array();
  for (const auto& f : families_) {
    json jf;
    jf["kind"] = kind_name(f.kind);
    jf["shift"] = f.shift;
    jf["scale"] = f.scale;
    if (f.kind == FamilyKind::Laguerre) jf["alpha"] = f.alpha;
    fams.push_back(jf);
  }
  j["families"] = fams;
  json idx = json::array();
  for (const auto& mi : indices_) idx.push_back(mi.j);
  j["indices"] = idx;
  if (is_empirical()) {
    const int K = this->K();
    std::vector<double> flat(static_cast<std::size_t>(K) * K);
    for (int r = 0; r < K; ++r)
      for (int c = 0; c < K; ++c)
        flat[static_cast<std::size_t>(r) * K + c] = transform_(r, c);
    j["transform_b64"] = base64_encode(
        reinterpret_cast<const unsigned char*>(flat.data()),
        flat.size() * sizeof(double));
  }
  return j;
}

BasisSpec BasisSpec::from_json(const json& j) {
  BasisSpec s;
  s.dim_ = j.at("dim").get<int>();
  s.max_total_degree_ = j.at("max_total_degree").get<int>();
  for (const auto& jf : j.at("families")) {
    Family1d f;
    f.kind = kind_from_name(jf.at("kind").get<std::string>());
    f.shift = jf.at("shift").get<double>();
    f.scale = jf.at("scale").get<double>();
    f.alpha = jf.value("alpha", 0.0);
    s.families_.push_back(f);
  }
  if (static_cast<int>(s.families_.size()) != s.dim_)
    throw CorruptFile("basis spec: families/dim mismatch");
  for (const auto& ji : j.at("indices")) {
    MultiIndex mi;
    mi.j = ji.get<std::vector<int>>();
    if (static_cast<int>(mi.j.size()) != s.dim_)
      throw CorruptFile("basis spec: index arity mismatch");
    s.indices_.push_back(std::move(mi));
  }
  auto expected = enumerate_multi_indices(s.dim_, s.max_total_degree_);
  if (expected.size() != s.indices_.size())
    throw FormatVersionMismatch("basis spec: index count does not match degree");
  if (s.is_empirical()) {
    const int K = s.K();
    auto bytes = base64_decode(j.at("transform_b64").get<std::string>());
    if (bytes.size() != static_cast<std::size_t>(K) * K * sizeof(double))
      throw CorruptFile("basis spec: transform payload size mismatch");
    s.transform_.resize(K, K);
    const double* p = reinterpret_cast<const double*>(bytes.data());
    for (int r = 0; r < K; ++r)
      for (int c = 0; c < K; ++c) s.transform_(r, c) = p[r * K + c];
  }
  return s;
}

}  // namespace otb
