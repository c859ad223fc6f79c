// Apache License, Version 2.0, refer to LICENSE.txt

#include "otb/models.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <nlohmann/json.hpp>

#include "otb/rng.hpp"

namespace otb {

using nlohmann::json;

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// log(1 + e^z) without overflow.
double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}
}  // namespace

PriorModel PriorModel::gaussian(Vec mean, Mat cov) {
  PriorModel p;
  p.kind_ = PriorKind::Gaussian;
  p.dim_ = static_cast<int>(mean.size());
  if (cov.rows() != p.dim_ || cov.cols() != p.dim_)
    throw UnsupportedPrior("gaussian: covariance shape mismatch");
  p.p1_ = std::move(mean);
  p.cov_ = std::move(cov);
  Eigen::LLT<Mat> llt(p.cov_);
  if (llt.info() != Eigen::Success)
    throw UnsupportedPrior("gaussian: covariance not positive definite");
  p.chol_ = llt.matrixL();
  p.cov_inv_ = llt.solve(Mat::Identity(p.dim_, p.dim_));
  p.cov_logdet_ = 2.0 * p.chol_.diagonal().array().log().sum();
  return p;
}

PriorModel PriorModel::uniform_box(Vec lo, Vec hi) {
  PriorModel p;
  p.kind_ = PriorKind::UniformBox;
  p.dim_ = static_cast<int>(lo.size());
  if (hi.size() != lo.size()) throw UnsupportedPrior("uniform_box: bound size mismatch");
  for (int a = 0; a < p.dim_; ++a)
    if (!(hi[a] > lo[a])) throw UnsupportedPrior("uniform_box: hi must exceed lo");
  p.p1_ = std::move(lo);
  p.p2_ = std::move(hi);
  return p;
}

PriorModel PriorModel::exponential(Vec rates) {
  PriorModel p;
  p.kind_ = PriorKind::Exponential;
  p.dim_ = static_cast<int>(rates.size());
  for (int a = 0; a < p.dim_; ++a)
    if (!(rates[a] > 0.0)) throw UnsupportedPrior("exponential: rates must be positive");
  p.p1_ = std::move(rates);
  return p;
}

PriorModel PriorModel::laplace(Vec scales) {
  PriorModel p;
  p.kind_ = PriorKind::Laplace;
  p.dim_ = static_cast<int>(scales.size());
  for (int a = 0; a < p.dim_; ++a)
    if (!(scales[a] > 0.0)) throw UnsupportedPrior("laplace: scales must be positive");
  p.p1_ = std::move(scales);
  return p;
}

PriorModel PriorModel::gamma(Vec shapes, Vec scales) {
  PriorModel p;
  p.kind_ = PriorKind::Gamma;
  p.dim_ = static_cast<int>(shapes.size());
  if (scales.size() != shapes.size()) throw UnsupportedPrior("gamma: parameter size mismatch");
  for (int a = 0; a < p.dim_; ++a)
    if (!(shapes[a] > 0.0) || !(scales[a] > 0.0))
      throw UnsupportedPrior("gamma: parameters must be positive");
  p.p1_ = std::move(shapes);
  p.p2_ = std::move(scales);
  return p;
}

double PriorModel::log_density(VecRef x) const {
  require_finite(x, "log_prior");
  if (!in_support(x)) return kNegInf;
  switch (kind_) {
    case PriorKind::Gaussian: {
      Vec r = x - p1_;
      return -0.5 * (dim_ * kLog2Pi + cov_logdet_ + r.dot(cov_inv_ * r));
    }
    case PriorKind::UniformBox: {
      double s = 0.0;
      for (int a = 0; a < dim_; ++a) s -= std::log(p2_[a] - p1_[a]);
      return s;
    }
    case PriorKind::Exponential: {
      double s = 0.0;
      for (int a = 0; a < dim_; ++a) s += std::log(p1_[a]) - p1_[a] * x[a];
      return s;
    }
    case PriorKind::Laplace: {
      double s = 0.0;
      for (int a = 0; a < dim_; ++a)
        s += -std::log(2.0 * p1_[a]) - std::abs(x[a]) / p1_[a];
      return s;
    }
    case PriorKind::Gamma: {
      double s = 0.0;
      for (int a = 0; a < dim_; ++a) {
        const double sh = p1_[a], sc = p2_[a];
        s += (sh - 1.0) * std::log(x[a]) - x[a] / sc - std::lgamma(sh) - sh * std::log(sc);
      }
      return s;
    }
  }
  return kNegInf;
}

Vec PriorModel::grad_log_density(VecRef x) const {
  require_finite(x, "grad_log_prior");
  Vec g = Vec::Zero(dim_);
  switch (kind_) {
    case PriorKind::Gaussian:
      g = -(cov_inv_ * (x - p1_));
      break;
    case PriorKind::UniformBox:
      break;
    case PriorKind::Exponential:
      g = -p1_;
      break;
    case PriorKind::Laplace:
      for (int a = 0; a < dim_; ++a) g[a] = -sign0(x[a]) / p1_[a];
      break;
    case PriorKind::Gamma:
      for (int a = 0; a < dim_; ++a) g[a] = (p1_[a] - 1.0) / x[a] - 1.0 / p2_[a];
      break;
  }
  return g;
}

Mat PriorModel::hess_log_density(VecRef x) const {
  Mat h = Mat::Zero(dim_, dim_);
  switch (kind_) {
    case PriorKind::Gaussian:
      h = -cov_inv_;
      break;
    case PriorKind::Gamma:
      for (int a = 0; a < dim_; ++a) h(a, a) = -(p1_[a] - 1.0) / (x[a] * x[a]);
      break;
    default:
      break;  // piecewise-linear or flat log densities
  }
  return h;
}

bool PriorModel::in_support(VecRef x) const {
  switch (kind_) {
    case PriorKind::UniformBox:
      for (int a = 0; a < dim_; ++a)
        if (x[a] < p1_[a] || x[a] > p2_[a]) return false;
      return true;
    case PriorKind::Exponential:
      for (int a = 0; a < dim_; ++a)
        if (x[a] < 0.0) return false;
      return true;
    case PriorKind::Gamma:
      for (int a = 0; a < dim_; ++a)
        if (!(x[a] > 0.0)) return false;
      return true;
    default:
      return true;
  }
}

std::pair<Vec, Vec> PriorModel::support_box() const {
  Vec lo = Vec::Constant(dim_, kNegInf);
  Vec hi = Vec::Constant(dim_, kPosInf);
  switch (kind_) {
    case PriorKind::UniformBox:
      lo = p1_;
      hi = p2_;
      break;
    case PriorKind::Exponential:
    case PriorKind::Gamma:
      lo.setZero();
      break;
    default:
      break;
  }
  return {lo, hi};
}

double PriorModel::entropy() const {
  switch (kind_) {
    case PriorKind::Gaussian:
      return 0.5 * (dim_ * (kLog2Pi + 1.0) + cov_logdet_);
    case PriorKind::UniformBox: {
      double s = 0.0;
      for (int a = 0; a < dim_; ++a) s += std::log(p2_[a] - p1_[a]);
      return s;
    }
    case PriorKind::Exponential: {
      double s = 0.0;
      for (int a = 0; a < dim_; ++a) s += 1.0 - std::log(p1_[a]);
      return s;
    }
    case PriorKind::Laplace: {
      double s = 0.0;
      for (int a = 0; a < dim_; ++a) s += 1.0 + std::log(2.0 * p1_[a]);
      return s;
    }
    case PriorKind::Gamma: {
      double s = 0.0;
      for (int a = 0; a < dim_; ++a) {
        const double sh = p1_[a], sc = p2_[a];
        s += sh + std::log(sc) + std::lgamma(sh) +
             (1.0 - sh) * boost::math::digamma(sh);
      }
      return s;
    }
  }
  return 0.0;
}

SampleSet PriorModel::sample(std::size_t n, std::uint64_t seed,
                             std::string_view stream) const {
  RngStream rng(seed, stream);
  SampleSet s;
  s.X.resize(static_cast<Eigen::Index>(n), dim_);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    switch (kind_) {
      case PriorKind::Gaussian: {
        Vec z(dim_);
        for (int a = 0; a < dim_; ++a) z[a] = rng.normal();
        s.X.row(r) = (p1_ + chol_ * z).transpose();
        break;
      }
      case PriorKind::UniformBox:
        for (int a = 0; a < dim_; ++a) s.X(r, a) = rng.uniform(p1_[a], p2_[a]);
        break;
      case PriorKind::Exponential:
        for (int a = 0; a < dim_; ++a) s.X(r, a) = rng.exponential(p1_[a]);
        break;
      case PriorKind::Laplace:
        for (int a = 0; a < dim_; ++a) s.X(r, a) = rng.laplace(p1_[a]);
        break;
      case PriorKind::Gamma:
        for (int a = 0; a < dim_; ++a) s.X(r, a) = rng.gamma(p1_[a], p2_[a]);
        break;
    }
  }
  s.seed = seed;
  s.source = descriptor().dump();
  return s;
}

Family1d PriorModel::family_for_dim(int a) const {
  switch (kind_) {
    case PriorKind::Gaussian: {
      for (int r = 0; r < dim_; ++r)
        for (int c = 0; c < dim_; ++c)
          if (r != c && std::abs(cov_(r, c)) > 1e-14 * std::sqrt(cov_(r, r) * cov_(c, c)))
            throw UnsupportedPrior(
                "correlated Gaussian prior has no per-dimension family; whiten first");
      return Family1d{FamilyKind::Hermite, p1_[a], std::sqrt(cov_(a, a)), 0.0};
    }
    case PriorKind::UniformBox:
      return Family1d{FamilyKind::Legendre, 0.5 * (p1_[a] + p2_[a]),
                      0.5 * (p2_[a] - p1_[a]), 0.0};
    case PriorKind::Exponential:
      return Family1d{FamilyKind::Laguerre, 0.0, 1.0 / p1_[a], 0.0};
    case PriorKind::Gamma:
      return Family1d{FamilyKind::Laguerre, 0.0, p2_[a], p1_[a] - 1.0};
    case PriorKind::Laplace:
      throw UnsupportedPrior(
          "Laplace prior has no classical orthogonal family; use an empirical basis "
          "or a two-stage chain");
  }
  throw UnsupportedPrior("unknown prior kind");
}

double PriorModel::isotropic_variance() const {
  if (kind_ != PriorKind::Gaussian)
    throw UnsupportedPrior("confidence radius requires an isotropic Gaussian prior");
  const double v = cov_(0, 0);
  if (!cov_.isApprox(v * Mat::Identity(dim_, dim_), 1e-12))
    throw UnsupportedPrior("confidence radius requires an isotropic Gaussian prior");
  return v;
}

json PriorModel::descriptor() const {
  json j;
  switch (kind_) {
    case PriorKind::Gaussian: {
      j["kind"] = "gaussian";
      j["mean"] = std::vector<double>(p1_.data(), p1_.data() + dim_);
      std::vector<double> cov_flat;
      for (int r = 0; r < dim_; ++r)
        for (int c = 0; c < dim_; ++c) cov_flat.push_back(cov_(r, c));
      j["cov"] = cov_flat;
      break;
    }
    case PriorKind::UniformBox:
      j["kind"] = "uniform";
      j["lo"] = std::vector<double>(p1_.data(), p1_.data() + dim_);
      j["hi"] = std::vector<double>(p2_.data(), p2_.data() + dim_);
      break;
    case PriorKind::Exponential:
      j["kind"] = "exponential";
      j["rate"] = std::vector<double>(p1_.data(), p1_.data() + dim_);
      break;
    case PriorKind::Laplace:
      j["kind"] = "laplace";
      j["scale"] = std::vector<double>(p1_.data(), p1_.data() + dim_);
      break;
    case PriorKind::Gamma:
      j["kind"] = "gamma";
      j["shape"] = std::vector<double>(p1_.data(), p1_.data() + dim_);
      j["scale"] = std::vector<double>(p2_.data(), p2_.data() + dim_);
      break;
  }
  return j;
}

PriorModel PriorModel::from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  auto vec = [&](const char* key) {
    auto v = j.at(key).get<std::vector<double>>();
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
  };
  if (kind == "gaussian") {
    Vec mean = vec("mean");
    auto cf = j.at("cov").get<std::vector<double>>();
    const int d = static_cast<int>(mean.size());
    if (static_cast<int>(cf.size()) != d * d)
      throw CorruptFile("gaussian prior: covariance size mismatch");
    Mat cov(d, d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) cov(r, c) = cf[static_cast<std::size_t>(r) * d + c];
    return gaussian(std::move(mean), std::move(cov));
  }
  if (kind == "uniform") return uniform_box(vec("lo"), vec("hi"));
  if (kind == "exponential") return exponential(vec("rate"));
  if (kind == "laplace") return laplace(vec("scale"));
  if (kind == "gamma") return gamma(vec("shape"), vec("scale"));
  throw CorruptFile("unknown prior kind '" + kind + "'");
}

LikelihoodModel LikelihoodModel::gaussian_linear(Mat M, Mat noise_cov, Vec y) {
  LikelihoodModel l;
  l.kind_ = LikelihoodKind::GaussianLinear;
  l.dim_ = static_cast<int>(M.cols());
  const int m = static_cast<int>(M.rows());
  if (noise_cov.rows() != m || noise_cov.cols() != m || y.size() != m)
    throw Error("gaussian_linear: shape mismatch");
  Eigen::LLT<Mat> llt(noise_cov);
  if (llt.info() != Eigen::Success)
    throw Error("gaussian_linear: noise covariance not positive definite");
  l.noise_inv_ = llt.solve(Mat::Identity(m, m));
  const double logdet = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
  l.const_term_ = -0.5 * (m * kLog2Pi + logdet);
  l.M_ = std::move(M);
  l.y_ = std::move(y);
  return l;
}

LikelihoodModel LikelihoodModel::poisson_counts(std::vector<long> counts) {
  LikelihoodModel l;
  l.kind_ = LikelihoodKind::PoissonCount;
  l.dim_ = static_cast<int>(counts.size());
  for (long c : counts)
    if (c < 0) throw Error("poisson_counts: negative count");
  l.counts_ = std::move(counts);
  l.const_term_ = 0.0;
  for (long c : l.counts_) l.const_term_ -= std::lgamma(static_cast<double>(c) + 1.0);
  return l;
}

LikelihoodModel LikelihoodModel::logistic(Mat features, std::vector<int> labels,
                                          double offset) {
  LikelihoodModel l;
  l.kind_ = LikelihoodKind::Logistic;
  l.dim_ = static_cast<int>(features.cols());
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw Error("logistic: features/labels size mismatch");
  for (int c : labels)
    if (c != 0 && c != 1) throw Error("logistic: labels must be 0 or 1");
  l.M_ = std::move(features);
  l.labels_ = std::move(labels);
  l.offset_ = offset;
  return l;
}

LikelihoodModel LikelihoodModel::spectral_magnitude(
    const std::vector<Vec>& group_magnitudes, double sigma2) {
  LikelihoodModel l;
  l.kind_ = LikelihoodKind::SpectralMagnitude;
  l.dim_ = static_cast<int>(group_magnitudes.size());
  if (!(sigma2 > 0.0)) throw Error("spectral_magnitude: sigma2 must be positive");
  l.sigma2_ = sigma2;
  l.group_sum_.resize(l.dim_);
  l.group_n_.resize(l.dim_);
  double ssq = 0.0;
  long total = 0;
  for (int i = 0; i < l.dim_; ++i) {
    const Vec& g = group_magnitudes[static_cast<std::size_t>(i)];
    if (g.size() == 0) throw Error("spectral_magnitude: empty group");
    l.group_sum_[i] = g.sum();
    l.group_n_[i] = static_cast<double>(g.size());
    ssq += g.squaredNorm();
    total += g.size();
  }
  l.const_term_ = -0.5 * ssq / sigma2 -
                  0.5 * static_cast<double>(total) * std::log(2.0 * M_PI * sigma2);
  return l;
}

double LikelihoodModel::log_likelihood(VecRef x) const {
  require_finite(x, "log_likelihood");
  switch (kind_) {
    case LikelihoodKind::GaussianLinear: {
      Vec r = y_ - M_ * x;
      return const_term_ - 0.5 * r.dot(noise_inv_ * r);
    }
    case LikelihoodKind::PoissonCount: {
      double s = const_term_;
      for (int a = 0; a < dim_; ++a) {
        const double xa = x[a];
        const long ya = counts_[static_cast<std::size_t>(a)];
        if (xa < 0.0) return kNegInf;
        if (xa == 0.0) {
          if (ya > 0) return kNegInf;
          continue;
        }
        s += static_cast<double>(ya) * std::log(xa) - xa;
      }
      return s;
    }
    case LikelihoodKind::Logistic: {
      double s = 0.0;
      for (Eigen::Index i = 0; i < M_.rows(); ++i) {
        const double z = M_.row(i).dot(x) + offset_;
        s += labels_[static_cast<std::size_t>(i)] * z - softplus(z);
      }
      return s;
    }
    case LikelihoodKind::SpectralMagnitude: {
      // sum_k (y_k - x_i)^2 = ssq_i - 2 x_i s_i + n_i x_i^2, ssq folded into const
      double s = const_term_;
      for (int i = 0; i < dim_; ++i)
        s += (group_sum_[i] * x[i] - 0.5 * group_n_[i] * x[i] * x[i]) / sigma2_;
      return s;
    }
  }
  return kNegInf;
}

Vec LikelihoodModel::grad_log_likelihood(VecRef x) const {
  require_finite(x, "grad_log_likelihood");
  switch (kind_) {
    case LikelihoodKind::GaussianLinear:
      return M_.transpose() * (noise_inv_ * (y_ - M_ * x));
    case LikelihoodKind::PoissonCount: {
      Vec g(dim_);
      for (int a = 0; a < dim_; ++a)
        g[a] = static_cast<double>(counts_[static_cast<std::size_t>(a)]) / x[a] - 1.0;
      return g;
    }
    case LikelihoodKind::Logistic: {
      Vec g = Vec::Zero(dim_);
      for (Eigen::Index i = 0; i < M_.rows(); ++i) {
        const double z = M_.row(i).dot(x) + offset_;
        g += (labels_[static_cast<std::size_t>(i)] - sigmoid(z)) * M_.row(i).transpose();
      }
      return g;
    }
    case LikelihoodKind::SpectralMagnitude: {
      Vec g(dim_);
      for (int i = 0; i < dim_; ++i)
        g[i] = (group_sum_[i] - group_n_[i] * x[i]) / sigma2_;
      return g;
    }
  }
  return Vec::Zero(dim_);
}

Mat LikelihoodModel::hess_log_likelihood(VecRef x) const {
  switch (kind_) {
    case LikelihoodKind::GaussianLinear:
      return -(M_.transpose() * noise_inv_ * M_);
    case LikelihoodKind::PoissonCount: {
      Mat h = Mat::Zero(dim_, dim_);
      for (int a = 0; a < dim_; ++a)
        h(a, a) = -static_cast<double>(counts_[static_cast<std::size_t>(a)]) / (x[a] * x[a]);
      return h;
    }
    case LikelihoodKind::Logistic: {
      Mat h = Mat::Zero(dim_, dim_);
      for (Eigen::Index i = 0; i < M_.rows(); ++i) {
        const double z = M_.row(i).dot(x) + offset_;
        const double w = sigmoid(z) * (1.0 - sigmoid(z));
        h.noalias() -= w * (M_.row(i).transpose() * M_.row(i));
      }
      return h;
    }
    case LikelihoodKind::SpectralMagnitude: {
      Mat h = Mat::Zero(dim_, dim_);
      for (int i = 0; i < dim_; ++i) h(i, i) = -group_n_[i] / sigma2_;
      return h;
    }
  }
  return Mat::Zero(dim_, dim_);
}

json LikelihoodModel::descriptor() const {
  json j;
  switch (kind_) {
    case LikelihoodKind::GaussianLinear: j["kind"] = "gaussian_linear"; break;
    case LikelihoodKind::PoissonCount: j["kind"] = "poisson"; break;
    case LikelihoodKind::Logistic: j["kind"] = "logistic"; break;
    case LikelihoodKind::SpectralMagnitude: j["kind"] = "spectral"; break;
  }
  j["dim"] = dim_;
  return j;
}

PosteriorTarget::PosteriorTarget(PriorModel prior, LikelihoodModel lik)
    : prior_(std::move(prior)), lik_(std::move(lik)) {
  if (prior_.dim() != lik_.dim())
    throw Error("posterior target: prior and likelihood dimensions differ");
}

double PosteriorTarget::log_density(VecRef x) const {
  const double lp = prior_.log_density(x);
  if (lp == kNegInf) return kNegInf;
  return lp + lik_.log_likelihood(x);
}

Vec PosteriorTarget::grad_log_density(VecRef x) const {
  return prior_.grad_log_density(x) + lik_.grad_log_likelihood(x);
}

Mat PosteriorTarget::hess_log_density(VecRef x) const {
  return prior_.hess_log_density(x) + lik_.hess_log_likelihood(x);
}

std::string PosteriorTarget::describe() const {
  json j;
  j["prior"] = prior_.descriptor();
  j["likelihood"] = lik_.descriptor();
  return j.dump();
}

std::string PriorTargetAdapter::describe() const { return prior_.descriptor().dump(); }

namespace {
/// Exact l1-regularized quadratic solve by cyclic coordinate descent.
Vec lasso_map(const PriorModel& prior, const LikelihoodModel& lik, VecRef x0) {
  const int d = prior.dim();
  // minimize 1/2 x^T A x - c^T x + sum |x_j| / b_j
  Mat A = -lik.hess_log_likelihood(Vec::Zero(d));
  Vec c = lik.grad_log_likelihood(Vec::Zero(d));
  Vec invb = prior.scales().cwiseInverse();
  Vec x = x0;
  for (int sweep = 0; sweep < 10000; ++sweep) {
    double max_delta = 0.0;
    for (int j = 0; j < d; ++j) {
      const double old = x[j];
      double rho = c[j] - (A.row(j).dot(x) - A(j, j) * x[j]);
      double z = 0.0;
      if (rho > invb[j]) z = (rho - invb[j]) / A(j, j);
      else if (rho < -invb[j]) z = (rho + invb[j]) / A(j, j);
      x[j] = z;
      max_delta = std::max(max_delta, std::abs(z - old));
    }
    if (max_delta < 1e-14 * (1.0 + x.cwiseAbs().maxCoeff())) break;
  }
  // minimal-norm subgradient certifies optimality
  Vec gs = A * x - c;
  for (int j = 0; j < d; ++j) {
    double mg;
    if (x[j] != 0.0) mg = gs[j] + sign0(x[j]) * invb[j];
    else mg = std::max(0.0, std::abs(gs[j]) - invb[j]);
    if (std::abs(mg) > 1e-8)
      throw DidNotConverge("map_estimate: l1 subgradient above tolerance");
  }
  return x;
}
}  // namespace

Vec map_estimate(const PosteriorTarget& target, VecRef x0) {
  require_finite(x0, "map_estimate");
  if (target.prior().kind() == PriorKind::Laplace &&
      target.likelihood().kind() == LikelihoodKind::GaussianLinear)
    return lasso_map(target.prior(), target.likelihood(), x0);

  const int d = target.dim();
  auto [lo, hi] = target.support_box();
  auto clip = [&](Vec v) {
    for (int a = 0; a < d; ++a) v[a] = std::min(std::max(v[a], lo[a]), hi[a]);
    return v;
  };
  // strictly positive interior start for densities vanishing at the boundary
  Vec x = clip(x0);
  if (target.log_density(x) == kNegInf) {
    for (int a = 0; a < d; ++a) {
      if (std::isfinite(lo[a]) && x[a] <= lo[a]) x[a] = lo[a] + 1e-6;
      if (std::isfinite(hi[a]) && x[a] >= hi[a]) x[a] = hi[a] - 1e-6;
    }
  }
  double f = target.log_density(x);
  if (f == kNegInf) throw DidNotConverge("map_estimate: infeasible start");

  const int max_iters = 500;
  const double tol = 1e-8;
  for (int it = 0; it < max_iters; ++it) {
    Vec g = target.grad_log_density(x);
    Vec pg = g;  // projected gradient: boundary components pushing outward drop out
    for (int a = 0; a < d; ++a) {
      if (x[a] <= lo[a] && g[a] < 0.0) pg[a] = 0.0;
      if (x[a] >= hi[a] && g[a] > 0.0) pg[a] = 0.0;
    }
    if (pg.norm() < tol) return x;

    Mat H = target.hess_log_density(x);
    Vec dir;
    double ridge = 0.0;
    for (int tries = 0; tries < 8; ++tries) {
      Eigen::LDLT<Mat> ldlt((-H + ridge * Mat::Identity(d, d)).eval());
      if (ldlt.info() == Eigen::Success) {
        dir = ldlt.solve(g);
        if (dir.dot(g) > 0.0 && dir.allFinite()) break;
      }
      ridge = ridge == 0.0 ? 1e-8 : ridge * 100.0;
      dir = g;
    }

    double t = 1.0;
    bool moved = false;
    while (t >= 1e-16) {
      Vec cand = clip(x + t * dir);
      const double fc = target.log_density(cand);
      if (fc > f + 1e-4 * g.dot(cand - x) && std::isfinite(fc)) {
        x = cand;
        f = fc;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) {
      if (pg.norm() < 1e-6) return x;  // flat to machine precision near the mode
      throw DidNotConverge("map_estimate: line search stalled");
    }
  }
  throw DidNotConverge("map_estimate: 500 iterations without convergence");
}

BasisSpec basis_for_prior(const PriorModel& prior, int max_total_degree) {
  std::vector<Family1d> fams;
  fams.reserve(static_cast<std::size_t>(prior.dim()));
  for (int a = 0; a < prior.dim(); ++a) fams.push_back(prior.family_for_dim(a));
  return BasisSpec::classical(std::move(fams), max_total_degree);
}

}  // namespace otb
