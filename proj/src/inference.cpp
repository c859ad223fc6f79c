// Apache License, Version 2.0, refer to LICENSE.txt

#include "otb/inference.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>

#include "otb/parallel.hpp"

namespace otb {

MeanWithSe conditional_expectation(const SampleSet& samples,
                                   const std::function<Vec(VecRef)>& f) {
  const std::size_t n = samples.n();
  if (n == 0) throw EmptySampleSet("conditional_expectation: no samples");
  Vec first = f(samples.row(0));
  const Eigen::Index m = first.size();
  Mat vals(static_cast<Eigen::Index>(n), m);
  vals.row(0) = first.transpose();
  par::parallel_for(n, [&](std::size_t i) {
    if (i == 0) return;
    vals.row(static_cast<Eigen::Index>(i)) = f(samples.row(i)).transpose();
  });
  MeanWithSe out;
  out.mean = vals.colwise().mean();
  out.se.resize(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const double var =
        (vals.col(c).array() - out.mean[c]).square().sum() / static_cast<double>(n);
    out.se[c] = std::sqrt(var / static_cast<double>(n));
  }
  return out;
}

double prior_confidence_radius(const PriorModel& prior, double alpha) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw Error("prior_confidence_radius: alpha must lie in (0, 1)");
  const double sigma2 = prior.isotropic_variance();
  boost::math::chi_squared_distribution<double> chi2(prior.dim());
  return std::sqrt(sigma2 * boost::math::quantile(chi2, 1.0 - alpha));
}

CredibleRegion credible_region_pushforward(const MapEval& S, const PriorModel& prior,
                                           double alpha, int resolution) {
  if (prior.dim() != 2)
    throw Error("credible_region_pushforward: boundary polyline requires d = 2");
  if (resolution < 8) throw Error("credible_region_pushforward: resolution too small");
  const double r = prior_confidence_radius(prior, alpha);
  const Vec& mu = prior.mean();

  Mat boundary(resolution, 2);
  std::vector<std::uint8_t> ok(static_cast<std::size_t>(resolution), 1);
  par::parallel_for(static_cast<std::size_t>(resolution), [&](std::size_t i) {
    const double th = 2.0 * M_PI * static_cast<double>(i) / resolution;
    Vec x(2);
    x << mu[0] + r * std::cos(th), mu[1] + r * std::sin(th);
    auto [y, J] = S(x);
    boundary.row(static_cast<Eigen::Index>(i)) = y.transpose();
    const double det = J.determinant();
    bool feasible = det > 0.0;
    if (feasible) {
      Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (J + J.transpose()));
      feasible = es.eigenvalues().minCoeff() > 0.0;
    }
    if (!feasible) ok[i] = 0;
  });
  std::size_t bad = 0;
  for (auto f : ok)
    if (!f) ++bad;
  if (static_cast<double>(bad) / resolution > 0.001) {
    SampleSet flagged;
    flagged.X = boundary;
    flagged.feasible = ok;
    flagged.n_infeasible = bad;
    throw InfeasibleRegion("credible_region_pushforward: boundary crosses an "
                           "infeasible region of the map",
                           std::move(flagged));
  }
  CredibleRegion out;
  out.kind = CredibleRegion::Kind::PushforwardBoundary;
  out.level = 1.0 - alpha;
  out.boundary = std::move(boundary);
  return out;
}

CredibleRegion marginal_credible_intervals(const SampleSet& samples, double alpha) {
  const std::size_t n = samples.n();
  if (n == 0) throw EmptySampleSet("marginal_credible_intervals: no samples");
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw Error("marginal_credible_intervals: alpha must lie in (0, 1)");
  const int d = samples.dim();
  const std::size_t k =
      static_cast<std::size_t>(std::floor(alpha * static_cast<double>(n) / 2.0));
  CredibleRegion out;
  out.kind = CredibleRegion::Kind::MarginalIntervals;
  out.level = 1.0 - alpha;
  out.lo.resize(d);
  out.hi.resize(d);
  std::vector<double> col(n);
  for (int a = 0; a < d; ++a) {
    for (std::size_t i = 0; i < n; ++i) col[i] = samples.X(static_cast<Eigen::Index>(i), a);
    std::sort(col.begin(), col.end());
    if (k == 0) {
      out.lo[a] = col.front();
      out.hi[a] = col.back();
    } else {
      out.lo[a] = 0.5 * (col[k - 1] + col[k]);
      out.hi[a] = 0.5 * (col[n - k - 1] + col[n - k]);
    }
  }
  return out;
}

bool point_in_polygon(const Mat& boundary, VecRef point) {
  // even-odd ray cast along +x
  const Eigen::Index m = boundary.rows();
  bool inside = false;
  for (Eigen::Index i = 0, j = m - 1; i < m; j = i++) {
    const double xi = boundary(i, 0), yi = boundary(i, 1);
    const double xj = boundary(j, 0), yj = boundary(j, 1);
    const bool crosses = (yi > point[1]) != (yj > point[1]);
    if (crosses) {
      const double x_at = xj + (point[1] - yj) / (yi - yj) * (xi - xj);
      if (point[0] < x_at) inside = !inside;
    }
  }
  return inside;
}

std::pair<int, Vec> bayes_action(const DecisionProblem& problem,
                                 const SampleSet& posterior_samples) {
  const int A = static_cast<int>(problem.actions.size());
  if (A == 0) throw Error("bayes_action: empty action list");
  const std::size_t n = posterior_samples.n();
  if (n == 0) throw EmptySampleSet("bayes_action: no samples");
  Vec expected(A);
  for (int a = 0; a < A; ++a) {
    double s = par::blocked_reduce(n, 0.0, [&](std::size_t b, std::size_t e, double& acc) {
      for (std::size_t i = b; i < e; ++i)
        acc += problem.loss(a, posterior_samples.row(i));
    });
    expected[a] = s / static_cast<double>(n);
  }
  int best = 0;
  for (int a = 1; a < A; ++a)
    if (expected[a] < expected[best]) best = a;  // ties keep the earlier action
  return {best, expected};
}

int map_action(const DecisionProblem& problem, VecRef x_map) {
  const int A = static_cast<int>(problem.actions.size());
  if (A == 0) throw Error("map_action: empty action list");
  int best = 0;
  double best_loss = problem.loss(0, x_map);
  for (int a = 1; a < A; ++a) {
    const double l = problem.loss(a, x_map);
    if (l < best_loss) {
      best = a;
      best_loss = l;
    }
  }
  return best;
}

double class_posterior(const SampleSet& posterior_samples,
                       const std::function<double(VecRef)>& label_model) {
  const std::size_t n = posterior_samples.n();
  if (n == 0) throw EmptySampleSet("class_posterior: no samples");
  double s = par::blocked_reduce(n, 0.0, [&](std::size_t b, std::size_t e, double& acc) {
    for (std::size_t i = b; i < e; ++i) acc += label_model(posterior_samples.row(i));
  });
  return s / static_cast<double>(n);
}

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  if (n == 0 || labels.size() != n) throw Error("roc_curve: scores/labels mismatch");
  std::size_t n_pos = 0, n_neg = 0;
  for (int c : labels) {
    if (c == 1) ++n_pos;
    else if (c == 0) ++n_neg;
    else throw Error("roc_curve: labels must be 0 or 1");
  }
  if (n_pos == 0 || n_neg == 0)
    throw SingleClass("roc_curve: both classes must be present");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  RocCurve out;
  out.fpr.push_back(0.0);
  out.tpr.push_back(0.0);
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  double auc = 0.0;
  while (i < n) {
    // advance through the whole tie group at this score
    std::size_t j = i;
    std::size_t tp_add = 0, fp_add = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1) ++tp_add;
      else ++fp_add;
      ++j;
    }
    tp += tp_add;
    fp += fp_add;
    const double prev_fpr = out.fpr.back();
    const double prev_tpr = out.tpr.back();
    const double cur_fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
    const double cur_tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
    auc += 0.5 * (cur_fpr - prev_fpr) * (cur_tpr + prev_tpr);
    out.fpr.push_back(cur_fpr);
    out.tpr.push_back(cur_tpr);
    i = j;
  }
  out.auc = auc;
  return out;
}

}  // namespace otb
