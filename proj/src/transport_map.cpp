// Apache License, Version 2.0, refer to LICENSE.txt

#include "otb/transport_map.hpp"

#include <functional>
#include <nlohmann/json.hpp>

#include "otb/parallel.hpp"
#include "otb/util.hpp"

namespace otb {

using nlohmann::json;

TransportMap::TransportMap(BasisSpec spec, Mat W, std::string fitted_for)
    : spec_(std::move(spec)), W_(std::move(W)), fitted_for_(std::move(fitted_for)) {
  if (W_.rows() != spec_.dim() || W_.cols() != spec_.K())
    throw Error("transport map: W shape does not match basis");
}

Vec TransportMap::apply(VecRef x) const { return W_ * spec_.eval(x).phi; }

Mat TransportMap::jacobian(VecRef x) const { return W_ * spec_.eval(x).jac; }

std::pair<Vec, Mat> TransportMap::apply_with_jacobian(VecRef x) const {
  BasisEval e = spec_.eval(x);
  return {W_ * e.phi, W_ * e.jac};
}

namespace {
bool jacobian_feasible(const Mat& J) {
  const int d = static_cast<int>(J.rows());
  if (d == 1) return J(0, 0) > 0.0;
  if (J.determinant() <= 0.0) return false;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (J + J.transpose()));
  return es.eigenvalues().minCoeff() > 0.0;
}

json stage_to_json(const TransportMap& m) {
  json js;
  js["basis"] = m.spec().to_json();
  js["rows"] = m.W().rows();
  js["cols"] = m.W().cols();
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.W().size()));
  for (Eigen::Index r = 0; r < m.W().rows(); ++r)
    for (Eigen::Index c = 0; c < m.W().cols(); ++c) flat.push_back(m.W()(r, c));
  js["W_b64"] = base64_encode(reinterpret_cast<const unsigned char*>(flat.data()),
                              flat.size() * sizeof(double));
  js["fitted_for"] = m.fitted_for();
  return js;
}

TransportMap stage_from_json(const json& js) {
  BasisSpec spec = BasisSpec::from_json(js.at("basis"));
  const int rows = js.at("rows").get<int>();
  const int cols = js.at("cols").get<int>();
  if (rows != spec.dim() || cols != spec.K())
    throw FormatVersionMismatch(
        "map file: W shape does not match the basis spec (K mismatch)");
  auto bytes = base64_decode(js.at("W_b64").get<std::string>());
  if (bytes.size() != static_cast<std::size_t>(rows) * cols * sizeof(double))
    throw CorruptFile("map file: W payload size mismatch");
  Mat W(rows, cols);
  const double* p = reinterpret_cast<const double*>(bytes.data());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) W(r, c) = p[static_cast<std::size_t>(r) * cols + c];
  return TransportMap(std::move(spec), std::move(W),
                      js.value("fitted_for", std::string{}));
}

json payload_json(const std::vector<const TransportMap*>& stages,
                  const PriorModel* source_prior) {
  json payload;
  payload["stages"] = json::array();
  for (const TransportMap* m : stages) payload["stages"].push_back(stage_to_json(*m));
  if (source_prior) payload["source_prior"] = source_prior->descriptor();
  return payload;
}
}  // namespace

bool TransportMap::feasible_at(VecRef x) const { return jacobian_feasible(jacobian(x)); }

std::string TransportMap::hash() const {
  return fnv1a64_hex(stage_to_json(*this).dump());
}

TransportMap identity_init(const BasisSpec& spec) {
  return TransportMap(spec, spec.identity_rows(), "identity");
}

FeasibilityReport feasibility_report(const TransportMap& map, const SampleSet& samples) {
  const std::size_t n = samples.n();
  if (n == 0) throw EmptySampleSet("feasibility_report: no samples");
  struct Acc {
    std::size_t violations = 0;
    double min_det = kPosInf;
    double min_eig = kPosInf;
    Acc& operator+=(const Acc& o) {
      violations += o.violations;
      min_det = std::min(min_det, o.min_det);
      min_eig = std::min(min_eig, o.min_eig);
      return *this;
    }
  };
  Acc acc = par::blocked_reduce(n, Acc{}, [&](std::size_t b, std::size_t e, Acc& a) {
    for (std::size_t i = b; i < e; ++i) {
      Mat J = map.jacobian(samples.row(i));
      const double det = J.determinant();
      double eig;
      if (J.rows() == 1) {
        eig = J(0, 0);
      } else {
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (J + J.transpose()));
        eig = es.eigenvalues().minCoeff();
      }
      a.min_det = std::min(a.min_det, det);
      a.min_eig = std::min(a.min_eig, eig);
      if (!(det > 0.0) || !(eig > 0.0)) ++a.violations;
    }
  });
  FeasibilityReport r;
  r.n_checked = n;
  r.n_violations = acc.violations;
  r.min_det = acc.min_det;
  r.min_sym_eig = acc.min_eig;
  return r;
}

namespace {
SampleSet push_rows(const SampleSet& samples, const std::string& map_hash,
                    const std::string& source_suffix,
                    const std::function<std::pair<Vec, Mat>(VecRef)>& eval) {
  const std::size_t n = samples.n();
  if (n == 0) throw EmptySampleSet("push_samples: no samples");
  SampleSet out;
  out.seed = samples.seed;
  out.source = samples.source.empty() ? source_suffix : samples.source + "|" + source_suffix;
  out.map_hash = map_hash;
  out.feasible.assign(n, 1);
  out.X.resize(samples.X.rows(), samples.X.cols());
  par::parallel_for(n, [&](std::size_t i) {
    auto [y, J] = eval(samples.row(i));
    out.X.row(static_cast<Eigen::Index>(i)) = y.transpose();
    if (!jacobian_feasible(J)) out.feasible[i] = 0;
  });
  out.n_infeasible = 0;
  for (std::uint8_t f : out.feasible)
    if (!f) ++out.n_infeasible;
  if (out.infeasible_fraction() > 0.001) {
    const std::string msg =
        "push_samples: " + std::to_string(out.n_infeasible) + " of " +
        std::to_string(n) + " rows have an infeasible Jacobian (map under-fit?)";
    throw InfeasibleRegion(msg, std::move(out));
  }
  return out;
}
}  // namespace

SampleSet push_samples(const TransportMap& map, const SampleSet& samples) {
  if (samples.dim() != map.dim()) throw Error("push_samples: dimension mismatch");
  return push_rows(samples, map.hash(), "pushed",
                   [&](VecRef x) { return map.apply_with_jacobian(x); });
}

Vec MapFile::apply(VecRef x) const {
  Vec v = x;
  for (const auto& m : stages) v = m.apply(v);
  return v;
}

std::pair<Vec, Mat> MapFile::apply_with_jacobian(VecRef x) const {
  if (stages.empty()) throw Error("map file: no stages");
  auto [v, J] = stages[0].apply_with_jacobian(x);
  for (std::size_t s = 1; s < stages.size(); ++s) {
    auto [v2, J2] = stages[s].apply_with_jacobian(v);
    v = v2;
    J = (J2 * J).eval();
  }
  return {v, J};
}

bool MapFile::feasible_at(VecRef x) const {
  Vec v = x;
  for (const auto& m : stages) {
    if (!m.feasible_at(v)) return false;
    v = m.apply(v);
  }
  return true;
}

std::string MapFile::hash() const {
  std::vector<const TransportMap*> ptrs;
  for (const auto& m : stages) ptrs.push_back(&m);
  return fnv1a64_hex(
      payload_json(ptrs, source_prior ? &*source_prior : nullptr).dump());
}

SampleSet MapFile::push(const SampleSet& samples) const {
  if (stages.empty()) throw Error("map file: no stages");
  if (samples.dim() != stages[0].dim()) throw Error("push: dimension mismatch");
  // feasibility of a chain = per-stage feasibility at the staged points
  return push_rows(samples, hash(), "pushed", [&](VecRef x) {
    Vec v = x;
    Mat J = Mat::Identity(samples.dim(), samples.dim());
    bool ok = true;
    for (const auto& m : stages) {
      auto [v2, J2] = m.apply_with_jacobian(v);
      if (!jacobian_feasible(J2)) ok = false;
      v = v2;
      J = (J2 * J).eval();
    }
    if (!ok) J = -Mat::Identity(samples.dim(), samples.dim());
    return std::pair<Vec, Mat>{v, J};
  });
}

namespace {
void save_payload(const json& payload, const std::string& path) {
  json file;
  file["format"] = "otb-map";
  file["version"] = 1;
  file["payload"] = payload;
  file["checksum"] = fnv1a64_hex(payload.dump());
  write_text_file(path, file.dump(2) + "\n");
}
}  // namespace

void save_map(const TransportMap& map, const std::string& path,
              const PriorModel* source_prior) {
  save_payload(payload_json({&map}, source_prior), path);
}

void save_map_chain(const std::vector<TransportMap>& stages, const std::string& path,
                    const PriorModel* source_prior) {
  if (stages.empty() || stages.size() > 2)
    throw Error("map file: chains hold one or two stages");
  std::vector<const TransportMap*> ptrs;
  for (const auto& m : stages) ptrs.push_back(&m);
  save_payload(payload_json(ptrs, source_prior), path);
}

MapFile load_map_file(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw CorruptFile(e.what());
  }
  json file = json::parse(text, nullptr, false);
  if (file.is_discarded() || !file.is_object())
    throw CorruptFile("map file: not valid JSON: " + path);
  if (file.value("format", std::string{}) != "otb-map")
    throw FormatVersionMismatch("map file: unrecognized format tag");
  if (file.value("version", -1) != 1)
    throw FormatVersionMismatch("map file: unsupported version");
  if (!file.contains("payload") || !file.contains("checksum"))
    throw CorruptFile("map file: missing payload or checksum");
  const json& payload = file["payload"];
  if (fnv1a64_hex(payload.dump()) != file["checksum"].get<std::string>())
    throw CorruptFile("map file: checksum mismatch");
  MapFile out;
  try {
    for (const auto& js : payload.at("stages")) out.stages.push_back(stage_from_json(js));
    if (payload.contains("source_prior"))
      out.source_prior = PriorModel::from_json(payload["source_prior"]);
  } catch (const FormatVersionMismatch&) {
    throw;
  } catch (const CorruptFile&) {
    throw;
  } catch (const std::exception& e) {
    throw CorruptFile(std::string("map file: ") + e.what());
  }
  if (out.stages.empty() || out.stages.size() > 2)
    throw FormatVersionMismatch("map file: expected one or two stages");
  return out;
}

TransportMap load_map(const std::string& path) {
  MapFile f = load_map_file(path);
  if (f.stages.size() != 1)
    throw FormatVersionMismatch("map file: expected a single-stage map");
  return f.stages[0];
}

}  // namespace otb
