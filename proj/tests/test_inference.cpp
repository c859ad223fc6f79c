// Apache License, Version 2.0, refer to LICENSE.txt

#include "otb/inference.hpp"

#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "otb/models.hpp"
#include "otb/rng.hpp"

using namespace otb;

namespace {

SampleSet set_from(std::initializer_list<double> vals) {
  SampleSet s;
  s.X = Mat(static_cast<Eigen::Index>(vals.size()), 1);
  Eigen::Index i = 0;
  for (double v : vals) s.X(i++, 0) = v;
  return s;
}

}  // namespace

TEST_CASE("conditional expectation and its standard error are exact on paper") {
  // n = 4 identity case worked by hand: mean 2.5, var 1.25, se sqrt(1.25/4)
  const SampleSet s = set_from({1.0, 2.0, 3.0, 4.0});
  const MeanWithSe m = conditional_expectation(s, [](VecRef x) { return Vec(x); });
  CHECK(m.mean[0] == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(m.se[0] == doctest::Approx(std::sqrt(1.25 / 4.0)).epsilon(1e-14));

  // vector-valued f: second component is the square
  const MeanWithSe q = conditional_expectation(s, [](VecRef x) {
    Vec out(2);
    out << x[0], x[0] * x[0];
    return out;
  });
  CHECK(q.mean[1] == doctest::Approx((1.0 + 4.0 + 9.0 + 16.0) / 4.0).epsilon(1e-14));

  // the se shrinks like 1/sqrt(n) for i.i.d. draws
  const PriorModel prior = PriorModel::gaussian(Vec::Zero(1), Mat::Identity(1, 1));
  const MeanWithSe big = conditional_expectation(
      prior.sample(40000, 211), [](VecRef x) { return Vec(x); });
  CHECK(std::abs(big.mean[0]) < 0.02);
  CHECK(big.se[0] == doctest::Approx(1.0 / 200.0).epsilon(0.05));

  SampleSet empty;
  empty.X = Mat::Zero(0, 1);
  CHECK_THROWS_AS(conditional_expectation(empty, [](VecRef x) { return Vec(x); }),
                  EmptySampleSet);
}

TEST_CASE("prior confidence radius reduces to closed forms") {
  // d = 2: chi-square(2) quantile is -2 ln(alpha), so r = sigma sqrt(-2 ln alpha)
  const PriorModel p2 = PriorModel::gaussian(Vec::Zero(2), 100.0 * Mat::Identity(2, 2));
  CHECK(std::abs(prior_confidence_radius(p2, 0.05) -
                 10.0 * std::sqrt(-2.0 * std::log(0.05))) < 1e-8);
  // d = 1: the radius is sigma times the two-sided normal quantile
  const PriorModel p1 = PriorModel::gaussian(Vec::Zero(1), 9.0 * Mat::Identity(1, 1));
  CHECK(prior_confidence_radius(p1, 0.05) ==
        doctest::Approx(3.0 * 1.9599639845400545).epsilon(1e-12));
  CHECK_THROWS_AS(prior_confidence_radius(p2, 0.0), Error);
  CHECK_THROWS_AS(prior_confidence_radius(p2, 1.0), Error);
}

TEST_CASE("marginal intervals exclude exactly the tail count") {
  const PriorModel prior = PriorModel::gaussian(Vec::Zero(2), Mat::Identity(2, 2));
  const SampleSet s = prior.sample(2000, 223);
  const CredibleRegion r = marginal_credible_intervals(s, 0.05);
  CHECK(r.kind == CredibleRegion::Kind::MarginalIntervals);
  CHECK(r.level == doctest::Approx(0.95));
  for (int a = 0; a < 2; ++a) {
    std::size_t below = 0, above = 0;
    for (std::size_t i = 0; i < s.n(); ++i) {
      const double v = s.X(static_cast<Eigen::Index>(i), a);
      if (v < r.lo[a]) ++below;
      if (v > r.hi[a]) ++above;
    }
    // floor(0.05 * 2000 / 2) = 50 samples strictly outside each tail
    CHECK(below == 50);
    CHECK(above == 50);
  }
}

TEST_CASE("small samples fall back to the min-max interval") {
  const SampleSet s = set_from({3.0, -1.0, 0.5, 2.0, 7.0});
  const CredibleRegion r = marginal_credible_intervals(s, 0.05);  // k = 0
  CHECK(r.lo[0] == -1.0);
  CHECK(r.hi[0] == 7.0);
  CHECK_THROWS_AS(marginal_credible_intervals(s, 1.5), Error);
  SampleSet empty;
  empty.X = Mat::Zero(0, 1);
  CHECK_THROWS_AS(marginal_credible_intervals(empty, 0.05), EmptySampleSet);
}

TEST_CASE("interval endpoints sit midway between the order statistics") {
  // 20 points 1..20, alpha = 0.2 -> k = 2: lo between 2 and 3, hi between 18, 19
  SampleSet s;
  s.X = Mat(20, 1);
  for (int i = 0; i < 20; ++i) s.X(i, 0) = static_cast<double>(20 - i);
  const CredibleRegion r = marginal_credible_intervals(s, 0.2);
  CHECK(r.lo[0] == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(r.hi[0] == doctest::Approx(18.5).epsilon(1e-14));
}

TEST_CASE("point-in-polygon handles convex and notched shapes") {
  Mat square(4, 2);
  square << 0, 0, 1, 0, 1, 1, 0, 1;
  CHECK(point_in_polygon(square, (Vec(2) << 0.5, 0.5).finished()));
  CHECK(point_in_polygon(square, (Vec(2) << 0.01, 0.99).finished()));
  CHECK_FALSE(point_in_polygon(square, (Vec(2) << 1.5, 0.5).finished()));
  CHECK_FALSE(point_in_polygon(square, (Vec(2) << 0.5, -0.2).finished()));
  CHECK_FALSE(point_in_polygon(square, (Vec(2) << -3.0, 0.5).finished()));

  // L-shape: the notch (x > 1, y > 1) is outside
  Mat ell(6, 2);
  ell << 0, 0, 2, 0, 2, 1, 1, 1, 1, 2, 0, 2;
  CHECK(point_in_polygon(ell, (Vec(2) << 0.5, 1.5).finished()));
  CHECK(point_in_polygon(ell, (Vec(2) << 1.5, 0.5).finished()));
  CHECK_FALSE(point_in_polygon(ell, (Vec(2) << 1.5, 1.5).finished()));
}

TEST_CASE("pushforward boundary of the identity is the prior circle") {
  const PriorModel prior = PriorModel::gaussian(Vec::Zero(2), 4.0 * Mat::Identity(2, 2));
  const MapEval ident = [](VecRef x) {
    return std::make_pair(Vec(x), Mat(Mat::Identity(2, 2)));
  };
  const CredibleRegion r = credible_region_pushforward(ident, prior, 0.05, 64);
  CHECK(r.kind == CredibleRegion::Kind::PushforwardBoundary);
  CHECK(r.boundary.rows() == 64);
  const double radius = 2.0 * std::sqrt(-2.0 * std::log(0.05));
  for (Eigen::Index i = 0; i < r.boundary.rows(); ++i)
    CHECK(r.boundary.row(i).norm() == doctest::Approx(radius).epsilon(1e-12));

  const PriorModel p1 = PriorModel::gaussian(Vec::Zero(1), Mat::Identity(1, 1));
  CHECK_THROWS_AS(credible_region_pushforward(ident, p1, 0.05), Error);
  CHECK_THROWS_AS(credible_region_pushforward(ident, prior, 0.05, 4), Error);
}

TEST_CASE("affine pushforward regions contain the nominal mass") {
  // affine maps carry the prior sphere to the exact posterior ellipse, so the
  // containment fraction equals the chi-square sphere mass up to MC noise
  const PriorModel prior = PriorModel::gaussian(Vec::Zero(2), Mat::Identity(2, 2));
  Mat A(2, 2);
  A << 1.0, 0.3, 0.0, 0.8;
  const Vec b = (Vec(2) << 0.4, -0.7).finished();
  const MapEval affine = [&](VecRef x) { return std::make_pair(Vec(A * x + b), Mat(A)); };
  const CredibleRegion r = credible_region_pushforward(affine, prior, 0.05, 256);

  const SampleSet fresh = prior.sample(5000, 227);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < fresh.n(); ++i) {
    const Vec y = A * Vec(fresh.row(i)) + b;
    if (point_in_polygon(r.boundary, y)) ++inside;
  }
  const double frac = static_cast<double>(inside) / static_cast<double>(fresh.n());
  CHECK(frac > 0.93);
  CHECK(frac < 0.97);
}

TEST_CASE("a boundary crossing infeasible territory is reported") {
  const PriorModel prior = PriorModel::gaussian(Vec::Zero(2), Mat::Identity(2, 2));
  // Jacobian [[x0, 0], [0, 1]] loses orientation on the left half plane
  const MapEval folded = [](VecRef x) {
    Vec y(2);
    y << 0.5 * x[0] * x[0], x[1];
    Mat J(2, 2);
    J << x[0], 0.0, 0.0, 1.0;
    return std::make_pair(y, J);
  };
  try {
    credible_region_pushforward(folded, prior, 0.05, 64);
    FAIL("expected InfeasibleRegion");
  } catch (const InfeasibleRegion& e) {
    CHECK(e.result.n_infeasible >= 30);  // about half of the 64 boundary points
    CHECK(e.result.n_infeasible <= 34);
  }
}

TEST_CASE("the Bayes action matches exhaustive enumeration") {
  const PriorModel prior = PriorModel::gaussian(Vec::Zero(2), Mat::Identity(2, 2));
  RngStream g(2311, "loss");
  for (int rep = 0; rep < 10; ++rep) {
    const int A = 2 + rep;  // up to 11 actions
    Mat coef(A, 3);
    for (int a = 0; a < A; ++a)
      for (int c = 0; c < 3; ++c) coef(a, c) = g.normal();
    DecisionProblem problem;
    problem.actions.resize(static_cast<std::size_t>(A), "a");
    problem.loss = [&coef](int a, VecRef x) {
      return coef(a, 0) + coef(a, 1) * x[0] + coef(a, 2) * std::abs(x[1]);
    };
    const SampleSet s = prior.sample(500, 1000 + static_cast<std::uint64_t>(rep));
    const auto [act, expected] = bayes_action(problem, s);
    CHECK(act == oracle::enumerate_best_action(A, problem.loss, s.X));
    // the reported expectations are plain sample means
    for (int a = 0; a < A; ++a) {
      double total = 0.0;
      for (std::size_t i = 0; i < s.n(); ++i) total += problem.loss(a, s.row(i));
      CHECK(expected[a] == doctest::Approx(total / 500.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("action ties resolve to the first action in order") {
  DecisionProblem problem;
  problem.actions = {"first", "twin", "worse"};
  problem.loss = [](int a, VecRef) { return a == 2 ? 1.0 : 0.25; };
  const SampleSet s = set_from({0.0, 1.0, 2.0});
  CHECK(bayes_action(problem, s).first == 0);
  CHECK(map_action(problem, Vec::Zero(1)) == 0);

  DecisionProblem empty_problem;
  CHECK_THROWS_AS(bayes_action(empty_problem, s), Error);
  CHECK_THROWS_AS(map_action(empty_problem, Vec::Zero(1)), Error);
}

TEST_CASE("the plug-in action minimizes the loss at the point estimate") {
  DecisionProblem problem;
  problem.actions = {"low", "mid", "high"};
  problem.loss = [](int a, VecRef x) {
    const double center = a == 0 ? -1.0 : (a == 1 ? 0.0 : 1.0);
    return (x[0] - center) * (x[0] - center);
  };
  CHECK(map_action(problem, Vec::Constant(1, -0.9)) == 0);
  CHECK(map_action(problem, Vec::Constant(1, 0.1)) == 1);
  CHECK(map_action(problem, Vec::Constant(1, 2.0)) == 2);
}

TEST_CASE("class posterior averages the label model over the samples") {
  const SampleSet s = set_from({-1.0, 0.0, 1.0, 3.0});
  const auto model = [](VecRef x) { return 1.0 / (1.0 + std::exp(-x[0])); };
  double expect = 0.0;
  for (double v : {-1.0, 0.0, 1.0, 3.0}) expect += 1.0 / (1.0 + std::exp(-v));
  expect /= 4.0;
  CHECK(class_posterior(s, model) == doctest::Approx(expect).epsilon(1e-14));
  SampleSet empty;
  empty.X = Mat::Zero(0, 1);
  CHECK_THROWS_AS(class_posterior(empty, model), EmptySampleSet);
}

TEST_CASE("the ROC curve is the threshold sweep worked by hand") {
  // scores 0.9(+), 0.8(-), 0.7(+), 0.6(-): staircase with AUC 0.75
  const RocCurve r = roc_curve({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0});
  CHECK(r.auc == doctest::Approx(0.75).epsilon(1e-14));
  REQUIRE(r.fpr.size() == 5);
  CHECK(r.fpr.front() == 0.0);
  CHECK(r.tpr.front() == 0.0);
  CHECK(r.fpr.back() == 1.0);
  CHECK(r.tpr.back() == 1.0);
  CHECK(r.tpr[1] == doctest::Approx(0.5));
  CHECK(r.fpr[1] == 0.0);
}

TEST_CASE("ROC area equals the pair-counting statistic") {
  RngStream g(2017, "roc");
  for (int rep = 0; rep < 8; ++rep) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 200; ++i) {
      // coarse grid scores force cross-class ties; positives shifted upward
      const int label = g.uniform01() < 0.4 ? 1 : 0;
      const double raw = g.normal() + (label ? 0.8 : 0.0);
      scores.push_back(std::round(raw * 4.0) / 4.0);
      labels.push_back(label);
    }
    const RocCurve r = roc_curve(scores, labels);
    CHECK(std::abs(r.auc - oracle::pair_count_auc(scores, labels)) < 1e-12);
    // the sweep never moves down or left
    for (std::size_t i = 1; i < r.fpr.size(); ++i) {
      CHECK(r.fpr[i] >= r.fpr[i - 1]);
      CHECK(r.tpr[i] >= r.tpr[i - 1]);
    }
  }
}

TEST_CASE("degenerate ROC inputs are rejected") {
  CHECK_THROWS_AS(roc_curve({0.5, 0.6}, {1, 1}), SingleClass);
  CHECK_THROWS_AS(roc_curve({0.5, 0.6}, {0, 0}), SingleClass);
  CHECK_THROWS_AS(roc_curve({0.5}, {1, 0}), Error);
  CHECK_THROWS_AS(roc_curve({0.5, 0.6}, {1, 2}), Error);
  CHECK_THROWS_AS(roc_curve({}, {}), Error);
}
