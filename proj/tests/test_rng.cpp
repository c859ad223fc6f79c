// Apache License, Version 2.0, refer to LICENSE.txt

#include "otb/rng.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"

using namespace otb;

TEST_CASE("substreams are deterministic and distinct") {
  RngStream a(42, "fit"), b(42, "fit"), c(42, "sample"), d(43, "fit");
  RngStream e(42, "fit", 1);
  std::vector<double> va, vb, vc, vd, ve;
  for (int i = 0; i < 16; ++i) {
    va.push_back(a.uniform01());
    vb.push_back(b.uniform01());
    vc.push_back(c.uniform01());
    vd.push_back(d.uniform01());
    ve.push_back(e.uniform01());
  }
  CHECK(va == vb);
  CHECK(va != vc);
  CHECK(va != vd);
  CHECK(va != ve);
}

TEST_CASE("derive_seed separates name and index") {
  CHECK(derive_seed(1, "trial", 0) != derive_seed(1, "trial", 1));
  CHECK(derive_seed(1, "trial", 0) != derive_seed(1, "eval", 0));
  CHECK(derive_seed(1, "trial", 3) == derive_seed(1, "trial", 3));
}

TEST_CASE("uniform01 stays strictly inside the unit interval") {
  RngStream g(7, "u");
  for (int i = 0; i < 20000; ++i) {
    const double u = g.uniform01();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

// Moment checks: tolerances are ~6 standard errors at the sample sizes used.
TEST_CASE("normal moments") {
  RngStream g(11, "n");
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = g.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.014);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("exponential and laplace moments") {
  RngStream g(13, "e");
  const int n = 200000;
  double se = 0.0, sl = 0.0, sl2 = 0.0;
  for (int i = 0; i < n; ++i) {
    se += g.exponential(2.0);
    const double l = g.laplace(0.5);
    sl += l;
    sl2 += l * l;
  }
  CHECK(std::abs(se / n - 0.5) < 0.01);       // mean 1/rate
  CHECK(std::abs(sl / n) < 0.01);             // symmetric about zero
  CHECK(std::abs(sl2 / n - 0.5) < 0.02);      // variance 2 b^2
}

TEST_CASE("gamma moments") {
  RngStream g(17, "g");
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = g.gamma(2.0, 0.5);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  CHECK(std::abs(mean - 1.0) < 0.02);   // a b
  CHECK(std::abs(var - 0.5) < 0.03);    // a b^2
}

TEST_CASE("poisson matches its mean and never goes negative") {
  RngStream g(19, "p");
  const int n = 100000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const long k = g.poisson(3.0);
    REQUIRE(k >= 0);
    s += static_cast<double>(k);
  }
  CHECK(std::abs(s / n - 3.0) < 0.04);
}
