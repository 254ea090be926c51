#pragma once

#include <cstdint>
#include <cmath>

#include "riskmdp/normal.hpp"

namespace riskmdp {

/// Counter-based pseudo-random stream (splitmix64). Streams are derived by
/// hashing (seed, stream ids), so parallel consumers get independent,
/// reproducible sequences regardless of scheduling.
class RngStream {
 public:
  explicit RngStream(std::uint64_t state) : state_(state) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// +1 or -1 with equal probability.
  double rademacher() { return (next_u64() >> 63) ? 1.0 : -1.0; }

  /// Standard normal via inverse-CDF; avoids the implementation-defined
  /// behaviour of std::normal_distribution.
  double normal() {
    double u;
    do {
      u = uniform01();
    } while (u <= 0.0);
    return normal_quantile(u);
  }

 private:
  std::uint64_t state_;
};

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Derive a stream from a master seed and up to three lane indices
/// (e.g. trajectory index, iteration, probe).
inline RngStream derive_stream(std::uint64_t seed, std::uint64_t a = 0,
                               std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = detail::mix64(seed + 0x9e3779b97f4a7c15ull);
  s = detail::mix64(s ^ (a + 0xbf58476d1ce4e5b9ull));
  s = detail::mix64(s ^ (b + 0x94d049bb133111ebull));
  s = detail::mix64(s ^ (c + 0x2545f4914f6cdd1dull));
  return RngStream(s);
}

/// A sub-seed usable as the master seed of another component.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  return derive_stream(seed, a, b, c).next_u64();
}

}  // namespace riskmdp
