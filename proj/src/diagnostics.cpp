// Apache License, Version 2.0, refer to LICENSE.txt

#include "otb/diagnostics.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "otb/parallel.hpp"

namespace otb {

using nlohmann::json;

MapEval map_eval(const TransportMap& m) {
  return [m](VecRef x) { return m.apply_with_jacobian(x); };
}

MapEval map_eval(const MapFile& m) {
  return [m](VecRef x) { return m.apply_with_jacobian(x); };
}

namespace {
bool jac_ok(const Mat& J, double* logdet) {
  const double det = J.rows() == 1 ? J(0, 0) : J.determinant();
  if (!(det > 0.0)) return false;
  if (J.rows() > 1) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (J + J.transpose()));
    if (!(es.eigenvalues().minCoeff() > 0.0)) return false;
  }
  *logdet = std::log(det);
  return true;
}
}  // namespace

double t_operator(const MapEval& S, const PosteriorTarget& target,
                  const PriorModel& source, VecRef x) {
  require_finite(x, "t_operator");
  auto [y, J] = S(x);
  double logdet;
  if (!jac_ok(J, &logdet))
    throw InfeasiblePoint("t_operator: Jacobian not orientation preserving at x");
  return target.log_density(y) + logdet - source.log_density(x);
}

double t_operator(const TransportMap& map, const PosteriorTarget& target, VecRef x) {
  return t_operator(map_eval(map), target, target.prior(), x);
}

TStats t_statistics(const MapEval& S, const PosteriorTarget& target,
                    const PriorModel& source, const SampleSet& samples) {
  const std::size_t n = samples.n();
  if (n == 0) throw EmptySampleSet("t_statistics: no samples");
  std::vector<double> T(n);
  std::vector<std::uint8_t> ok(n, 1);
  par::parallel_for(n, [&](std::size_t i) {
    auto [y, J] = S(samples.row(i));
    double logdet;
    if (!jac_ok(J, &logdet)) {
      ok[i] = 0;
      return;
    }
    const double lq = target.log_density(y);
    if (lq == kNegInf) {
      ok[i] = 0;
      return;
    }
    T[i] = lq + logdet - source.log_density(samples.row(i));
  });
  TStats st;
  for (std::size_t i = 0; i < n; ++i)
    if (ok[i]) ++st.n_used;
  st.n_infeasible = n - st.n_used;
  if (st.n_used * 2 < n)
    throw TooFewFeasible("t_statistics: over half the rows are infeasible");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (ok[i]) mean += T[i];
  mean /= static_cast<double>(st.n_used);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (ok[i]) var += (T[i] - mean) * (T[i] - mean);
  var /= static_cast<double>(st.n_used);
  st.mean = mean;
  st.variance = var;
  return st;
}

double variance_of_T(const TransportMap& map, const PosteriorTarget& target,
                     const SampleSet& samples) {
  return t_statistics(map_eval(map), target, target.prior(), samples).variance;
}

double log_beta(const TransportMap& map, const PosteriorTarget& target,
                const SampleSet& samples) {
  return t_statistics(map_eval(map), target, target.prior(), samples).mean;
}

double log_beta_mc(const PosteriorTarget& target, const SampleSet& prior_samples) {
  const std::size_t n = prior_samples.n();
  if (n == 0) throw EmptySampleSet("log_beta_mc: no samples");
  std::vector<double> ll(n);
  par::parallel_for(n, [&](std::size_t i) {
    ll[i] = target.likelihood().log_likelihood(prior_samples.row(i));
  });
  double m = kNegInf;
  for (double v : ll) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : ll) s += std::exp(v - m);
  return m + std::log(s / static_cast<double>(n));
}

double kl_source_to_induced(const MapEval& S, const PriorModel& source,
                            const TargetDensity& target, const SampleSet& samples) {
  if (!target.normalized())
    throw RequiresNormalizedTarget(
        "kl_source_to_induced: target density must be normalized");
  const std::size_t n = samples.n();
  if (n == 0) throw EmptySampleSet("kl_source_to_induced: no samples");
  std::vector<double> term(n);
  std::vector<std::uint8_t> ok(n, 1);
  par::parallel_for(n, [&](std::size_t i) {
    auto [y, J] = S(samples.row(i));
    double logdet;
    if (!jac_ok(J, &logdet)) {
      ok[i] = 0;
      return;
    }
    const double lq = target.log_density(y);
    if (lq == kNegInf) {
      ok[i] = 0;
      return;
    }
    term[i] = lq + logdet;
  });
  for (std::size_t i = 0; i < n; ++i)
    if (!ok[i]) return kPosInf;  // mass pushed outside the target support
  double mean = 0.0;
  for (double v : term) mean += v;
  mean /= static_cast<double>(n);
  return -source.entropy() - mean;
}

double kl_source_to_induced(const TransportMap& map, const PriorModel& source,
                            const TargetDensity& target, const SampleSet& samples) {
  return kl_source_to_induced(map_eval(map), source, target, samples);
}

double info_gain(const TransportMap& map, const PosteriorTarget& target,
                 const SampleSet& prior_samples) {
  TStats st = t_statistics(map_eval(map), target, target.prior(), prior_samples);
  const std::size_t n = prior_samples.n();
  std::vector<double> ll(n);
  std::vector<std::uint8_t> ok(n, 1);
  par::parallel_for(n, [&](std::size_t i) {
    auto [y, J] = map.apply_with_jacobian(prior_samples.row(i));
    double logdet;
    if (!jac_ok(J, &logdet)) {
      ok[i] = 0;
      return;
    }
    ll[i] = target.likelihood().log_likelihood(y);
  });
  double mean_ll = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (ok[i]) {
      mean_ll += ll[i];
      ++used;
    }
  if (used == 0) throw TooFewFeasible("info_gain: no feasible rows");
  mean_ll /= static_cast<double>(used);
  return -st.mean + mean_ll;
}

json DiagnosticsReport::to_json() const {
  json j;
  j["var_T"] = var_T;
  j["log_beta_map"] = log_beta_map;
  j["log_beta_mc"] = log_beta_mc;
  if (kl_estimate) j["kl_estimate"] = *kl_estimate;
  else j["kl_estimate"] = nullptr;
  j["info_gain"] = info_gain;
  j["n_used"] = n_used;
  j["n_infeasible"] = n_infeasible;
  return j;
}

DiagnosticsReport diagnose(const MapEval& S, const PosteriorTarget& target,
                           const PriorModel& source, const SampleSet& samples,
                           const TargetDensity* normalized_reference) {
  DiagnosticsReport r;
  TStats st = t_statistics(S, target, source, samples);
  r.var_T = st.variance;
  r.log_beta_map = st.mean;
  r.log_beta_mc = log_beta_mc(target, samples);
  r.n_used = st.n_used;
  r.n_infeasible = st.n_infeasible;
  if (normalized_reference)
    r.kl_estimate = kl_source_to_induced(S, source, *normalized_reference, samples);
  // info gain from the same pass: -log beta + mean pushed log likelihood
  {
    const std::size_t n = samples.n();
    std::vector<double> ll(n);
    std::vector<std::uint8_t> ok(n, 1);
    par::parallel_for(n, [&](std::size_t i) {
      auto [y, J] = S(samples.row(i));
      double logdet;
      if (!jac_ok(J, &logdet)) {
        ok[i] = 0;
        return;
      }
      ll[i] = target.likelihood().log_likelihood(y);
    });
    double mean_ll = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (ok[i]) {
        mean_ll += ll[i];
        ++used;
      }
    r.info_gain = used ? -st.mean + mean_ll / static_cast<double>(used) : 0.0;
  }
  return r;
}

DiagnosticsReport diagnose(const TransportMap& map, const PosteriorTarget& target,
                           const SampleSet& samples,
                           const TargetDensity* normalized_reference) {
  return diagnose(map_eval(map), target, target.prior(), samples,
                  normalized_reference);
}

}  // namespace otb
