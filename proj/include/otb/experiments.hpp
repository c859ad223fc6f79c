// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "otb/common.hpp"
#include "otb/diagnostics.hpp"
#include "otb/solver.hpp"

namespace otb {

/// Outcome of one preset scenario: scalar metrics, per-trial rows for the CSV
/// artifact, and the settings the run resolved to.
struct ExperimentReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;
  std::vector<std::string> trial_header;
  std::vector<std::vector<double>> trial_rows;
  std::size_t n_trials = 0;
  std::size_t n_failed = 0;  // failed trials are counted, never dropped silently
  double wall_time_s = 0.0;
  std::optional<DiagnosticsReport> diagnostics;
  nlohmann::json settings;

  nlohmann::json to_json() const;
  void write(const std::string& out_dir) const;  // report.json + trials.csv
};

struct GammaPoissonConfig {
  std::uint64_t seed = 2026;
  double shape = 2.0;
  double scale = 0.5;
  long y = 1;
  int degree = 5;
  std::vector<std::size_t> n_train = {50, 100, 500, 1000};
  std::size_t n_eval = 2000;
  std::size_t n_mc = 100000;
};
ExperimentReport run_gamma_poisson(const GammaPoissonConfig& cfg = {});

struct UniformExampleConfig {
  std::uint64_t seed = 2026;
  double source_lo = 0.0, source_hi = 2.0;
  double target_lo = 0.0, target_hi = 1.0;
  int degree = 5;
  std::size_t n_train = 2000;
  int grid_points = 200;
};
ExperimentReport run_uniform_example(const UniformExampleConfig& cfg = {});

struct SparseThresholdConfig {
  std::uint64_t seed = 2026;
  int dim = 3;
  double laplace_scale = 0.70710678118654752440;  // 1/sqrt(2)
  double noise_var = 0.1;
  double mass = 0.05;  // tail mass defining the threshold
  int trials = 200;
  int degree = 3;
  std::size_t n_train = 400;
  std::size_t n_eval = 2000;
};
ExperimentReport run_sparse_threshold(const SparseThresholdConfig& cfg = {});

struct LogisticSimConfig {
  std::uint64_t seed = 2026;
  double cluster_offset = 0.8;  // class means at +-(offset, offset)
  /// Per-class isotropic covariances.  Unequal scales make the linear model
  /// misspecified, which is where posterior averaging can out-rank the
  /// plug-in fit; equal scales make the two rules nearly indistinguishable.
  double class1_var = 0.5;
  double class0_var = 2.0;
  int n_train_per_class = 5;
  int n_test_per_class = 50;
  int seeds = 20;
  int degree = 3;
  std::size_t n_train = 1000;
  std::size_t n_eval = 8000;
};
ExperimentReport run_logistic_sim(const LogisticSimConfig& cfg = {});

struct SpectralStagingConfig {
  std::uint64_t seed = 2026;
  int windows = 200;
  double sigma = 50.0;     // magnitude noise scale
  double rate = 0.01;      // Exponential prior rate
  double jitter_sd = 0.25; // per-window wobble of the template line shape
  int degree = 4;
  std::size_t n_train = 400;
  std::size_t n_eval = 1000;
};
ExperimentReport run_spectral_staging(const SpectralStagingConfig& cfg = {});

/// Dispatch by scenario name; unknown names raise ConfigError.
ExperimentReport run_experiment(const std::string& scenario, std::uint64_t seed);

}  // namespace otb
