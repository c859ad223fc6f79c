// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "otb/common.hpp"
#include "otb/models.hpp"
#include "otb/transport_map.hpp"

namespace otb {

struct FitOptions {
  int max_iters = 500;
  double grad_tol = 1e-7;
  double shrink = 0.5;       // line-search backtracking factor
  double armijo_c = 1e-4;    // sufficient-increase constant
  double eps_det = 1e-12;    // Jacobian determinant floor
  std::uint64_t seed = 0;
  /// Newton steps are used while d*K stays within this budget; plain gradient
  /// ascent otherwise.
  int newton_param_limit = 200;
};

enum class Termination { Converged, MaxIters, LineSearchStall };
const char* termination_name(Termination t);

struct SolveReport {
  int iterations = 0;
  /// Objective value at the start and after every accepted step; non-decreasing.
  std::vector<double> objective;
  double final_grad_norm = 0.0;
  double wall_time_s = 0.0;
  Termination termination = Termination::MaxIters;
  nlohmann::json to_json() const;
};

/// Per-sample basis evaluations reused across solver iterations.
class FitCache {
 public:
  static FitCache build(const BasisSpec& spec, const SampleSet& samples,
                        const PriorModel* source = nullptr);
  std::size_t n() const { return static_cast<std::size_t>(Phi_.rows()); }
  int K() const { return static_cast<int>(Phi_.cols()); }
  int dim() const { return dim_; }
  const Mat& Phi() const { return Phi_; }             // n x K
  const Mat& jac(std::size_t i) const { return jacs_[i]; }  // K x d
  /// log p(X_i) under the source model; empty when none was given.
  const Vec& source_logp() const { return source_logp_; }

 private:
  int dim_ = 0;
  Mat Phi_;
  std::vector<Mat> jacs_;
  Vec source_logp_;
};

/// Sample-average objective (1/N) sum [log q(W phi_i) + log det(W J_i)];
/// -inf if any sample violates the determinant floor, the positive-definite
/// symmetric part, or the target support.
double objective(MatRef W, const FitCache& cache, const TargetDensity& target,
                 double eps_det = 1e-12);

/// Analytic gradient (1/N) sum [grad log q(W phi_i) phi_i^T + (W J_i)^-T J_i^T].
/// SingularJacobian if any W J_i has condition number above 1e12.
Mat gradient(MatRef W, const FitCache& cache, const TargetDensity& target);

std::pair<double, Mat> objective_and_gradient(MatRef W, const FitCache& cache,
                                              const TargetDensity& target,
                                              double eps_det = 1e-12);

/// Hessian of the objective in vec(W) coordinates (row-major d x K).
Mat objective_hessian(MatRef W, const FitCache& cache, const TargetDensity& target);

struct FitResult {
  TransportMap map;
  SolveReport report;
};

/// Ascent from the identity map (or W0 when given) with Armijo backtracking;
/// Newton steps while the parameter count permits.  The log-det barrier keeps
/// every iterate feasible on the training samples.
FitResult fit(const TargetDensity& target, const SampleSet& samples,
              const BasisSpec& spec, const FitOptions& opts = {},
              const Mat* W0 = nullptr);

/// Non-convergence of one stage of a chained fit.
struct ChainStageError : Error {
  ChainStageError(int stage_, Termination reason_)
      : Error("fit_chain stage " + std::to_string(stage_) + ": " +
              termination_name(reason_)),
        stage(stage_),
        reason(reason_) {}
  int stage;
  Termination reason;
};

struct ChainResult {
  TransportMap stage1, stage2;
  SolveReport report1, report2;
  SampleSet pushed;  // stage-1 images used to train stage 2
};

/// Two-stage fit through an intermediate distribution: base -> intermediate
/// with the given basis, then intermediate -> final with an Empirical-Gram
/// basis built on the pushed samples.
ChainResult fit_chain(const PriorModel& base, const TargetDensity& intermediate,
                      const TargetDensity& final_target, const SampleSet& base_samples,
                      const BasisSpec& base_spec, const FitOptions& opts = {});

}  // namespace otb
