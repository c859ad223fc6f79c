// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <functional>
#include <nlohmann/json_fwd.hpp>
#include <optional>

#include "otb/common.hpp"
#include "otb/models.hpp"
#include "otb/sampleset.hpp"
#include "otb/transport_map.hpp"

namespace otb {

/// Evaluates a candidate map: returns (S(x), J_S(x)).  Lets the diagnostics
/// run on fitted polynomial maps, chained maps, and reference constructions
/// (e.g. quantile maps) alike.
using MapEval = std::function<std::pair<Vec, Mat>(VecRef)>;

MapEval map_eval(const TransportMap& m);
MapEval map_eval(const MapFile& m);

/// T(x) = log q~(S(x)) + log det J_S(x) - log p(x): constant and equal to
/// log beta_y exactly when S transports the source to the posterior.
/// InfeasiblePoint when the Jacobian at x is not orientation preserving.
double t_operator(const MapEval& S, const PosteriorTarget& target,
                  const PriorModel& source, VecRef x);
double t_operator(const TransportMap& map, const PosteriorTarget& target, VecRef x);

struct TStats {
  double mean = 0.0;      // log beta estimate
  double variance = 0.0;  // fit-quality scalar
  std::size_t n_used = 0;
  std::size_t n_infeasible = 0;
};

/// Sample statistics of T; infeasible rows are excluded and counted.
/// TooFewFeasible when fewer than half the rows are usable.
TStats t_statistics(const MapEval& S, const PosteriorTarget& target,
                    const PriorModel& source, const SampleSet& samples);

double variance_of_T(const TransportMap& map, const PosteriorTarget& target,
                     const SampleSet& samples);
double log_beta(const TransportMap& map, const PosteriorTarget& target,
                const SampleSet& samples);

/// Direct Monte Carlo log of the normalization constant: a stabilized
/// log-mean-exp of the likelihood over prior draws.
double log_beta_mc(const PosteriorTarget& target, const SampleSet& prior_samples);

/// KL(P || S^-1 # Q) = -h(P) - (1/n) sum [log q(S(X_i)) + log det J_S(X_i)]
/// for a normalized target density q; +inf when the map leaves the support.
double kl_source_to_induced(const MapEval& S, const PriorModel& source,
                            const TargetDensity& target, const SampleSet& samples);
double kl_source_to_induced(const TransportMap& map, const PriorModel& source,
                            const TargetDensity& target, const SampleSet& samples);

/// Estimated KL(posterior || prior): -log beta + mean pushed log likelihood.
double info_gain(const TransportMap& map, const PosteriorTarget& target,
                 const SampleSet& prior_samples);

struct DiagnosticsReport {
  double var_T = 0.0;
  double log_beta_map = 0.0;
  double log_beta_mc = 0.0;
  /// Present only when a normalized reference density is available.
  std::optional<double> kl_estimate;
  double info_gain = 0.0;
  std::size_t n_used = 0;
  std::size_t n_infeasible = 0;
  nlohmann::json to_json() const;
};

DiagnosticsReport diagnose(const MapEval& S, const PosteriorTarget& target,
                           const PriorModel& source, const SampleSet& samples,
                           const TargetDensity* normalized_reference = nullptr);
DiagnosticsReport diagnose(const TransportMap& map, const PosteriorTarget& target,
                           const SampleSet& samples,
                           const TargetDensity* normalized_reference = nullptr);

}  // namespace otb
