// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace otb {

/// Deterministic random stream derived from a root seed and a stream name.
///
/// All randomness in the library flows through named sub-streams of a single
/// root seed ("fit", "sample", "trial" + index, ...).  Draws are inverse-CDF
/// transforms of the mt19937_64 bit stream, so a given (root, name, index)
/// triple reproduces the same values bit for bit on any platform.
class RngStream {
 public:
  RngStream(std::uint64_t root_seed, std::string_view name, std::uint64_t index = 0);

  /// Uniform draw strictly inside (0, 1).
  double uniform01();
  double uniform(double lo, double hi);
  /// Standard normal via the inverse CDF.
  double normal();
  double exponential(double rate);
  double laplace(double scale);
  /// Gamma(shape, scale) via inversion of the regularized incomplete gamma.
  double gamma(double shape, double scale);
  /// Poisson count by sequential CDF inversion (intended for small means).
  long poisson(double mean);

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

/// Derives the seed a named sub-stream starts from (exposed for tests).
std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view name,
                          std::uint64_t index);

}  // namespace otb
