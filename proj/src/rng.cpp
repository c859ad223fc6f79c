// Apache License, Version 2.0, refer to LICENSE.txt

#include "otb/rng.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

#include "otb/util.hpp"

namespace otb {

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view name,
                          std::uint64_t index) {
  std::uint64_t h = splitmix64(root_seed ^ fnv1a64(name));
  return splitmix64(h ^ splitmix64(index));
}

RngStream::RngStream(std::uint64_t root_seed, std::string_view name,
                     std::uint64_t index)
    : gen_(derive_seed(root_seed, name, index)) {}

double RngStream::uniform01() {
  // 53-bit mantissa shifted off the zero endpoint: value lies in (0, 1)
  return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

double RngStream::normal() {
  static const boost::math::normal_distribution<double> unit(0.0, 1.0);
  return boost::math::quantile(unit, uniform01());
}

double RngStream::exponential(double rate) {
  return -std::log1p(-uniform01()) / rate;
}

double RngStream::laplace(double scale) {
  double u = uniform01();
  return u < 0.5 ? scale * std::log(2.0 * u) : -scale * std::log(2.0 * (1.0 - u));
}

double RngStream::gamma(double shape, double scale) {
  return scale * boost::math::gamma_p_inv(shape, uniform01());
}

long RngStream::poisson(double mean) {
  double u = uniform01();
  double p = std::exp(-mean);
  double cdf = p;
  long k = 0;
  while (u > cdf && k < 100000) {
    ++k;
    p *= mean / static_cast<double>(k);
    cdf += p;
  }
  return k;
}

}  // namespace otb
