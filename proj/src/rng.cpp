#include "pirank/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pirank {

double Rng::uniform01() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int(0)");
  // 2^64 mod n, computed without overflow
  const std::uint64_t rem = (0 - n) % n;
  for (;;) {
    const std::uint64_t x = next();
    if (rem == 0 || x < 0 - rem) return x % n;
  }
}

double Rng::normal(double mean, double stddev) {
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return mean + stddev * z;
}

}  // namespace pirank
