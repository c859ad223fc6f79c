// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "otb/common.hpp"
#include "otb/diagnostics.hpp"
#include "otb/models.hpp"
#include "otb/sampleset.hpp"

namespace otb {

struct MeanWithSe {
  Vec mean;
  Vec se;  // Monte Carlo standard error per component
};

/// Posterior expectation of f over an i.i.d. sample set.
MeanWithSe conditional_expectation(const SampleSet& samples,
                                   const std::function<Vec(VecRef)>& f);

/// Radius of the sphere holding 1 - alpha prior mass for N(mean, sigma^2 I):
/// sigma * sqrt(chi2_quantile(d, 1 - alpha)).
double prior_confidence_radius(const PriorModel& prior, double alpha);

struct CredibleRegion {
  enum class Kind { PushforwardBoundary, MarginalIntervals };
  Kind kind = Kind::MarginalIntervals;
  double level = 0.0;  // 1 - alpha
  Mat boundary;        // pushforward: resolution x d closed loop
  Vec lo, hi;          // marginal intervals
};

/// Image of the prior confidence sphere boundary under the map (d = 2).
CredibleRegion credible_region_pushforward(const MapEval& S, const PriorModel& prior,
                                           double alpha, int resolution = 256);

/// Equal-tail intervals with midpoint-interpolated quantiles: exactly
/// floor(alpha n / 2) samples fall outside each tail.
CredibleRegion marginal_credible_intervals(const SampleSet& samples, double alpha);

/// Even-odd containment test against a closed polyline.
bool point_in_polygon(const Mat& boundary, VecRef point);

/// Finite action set with loss as a function of the parameter.
struct DecisionProblem {
  std::vector<std::string> actions;
  std::function<double(int action, VecRef x)> loss;
};

/// Minimizer of the Monte Carlo posterior expected loss; ties resolve to the
/// first action in order.  Returns (action index, per-action expected loss).
std::pair<int, Vec> bayes_action(const DecisionProblem& problem,
                                 const SampleSet& posterior_samples);

/// Loss minimizer at the plug-in point estimate.
int map_action(const DecisionProblem& problem, VecRef x_map);

/// Average of a label model p(c = 1 | x) over posterior samples.
double class_posterior(const SampleSet& posterior_samples,
                       const std::function<double(VecRef)>& label_model);

struct RocCurve {
  std::vector<double> fpr, tpr;  // starts at (0,0), ends at (1,1)
  double auc = 0.0;
};

/// ROC by sweeping thresholds over the distinct scores in descending order;
/// tied scores move together.  SingleClass when a label value is absent.
RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace otb
