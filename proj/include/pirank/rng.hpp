#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace pirank {

/// Portable seeded generator. The engine is std::mt19937_64 (whose output
/// sequence the C++ standard fixes); the distributions below are defined here
/// rather than taken from <random> so results match across standard
/// libraries:
///   uniform01()      = (next() >> 11) * 2^-53
///   uniform_int(n)   = next() % n, rejecting next() >= 2^64 - (2^64 mod n)
///   normal()         = Box-Muller, cos branch only, u1 = 1 - uniform01()
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::uint64_t uniform_int(std::uint64_t n);
  double normal(double mean = 0.0, double stddev = 1.0);

  /// Fisher-Yates, swapping i with uniform_int(i + 1) from the back.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i-- > 1;) {
      std::swap(items[i], items[uniform_int(i + 1)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pirank
