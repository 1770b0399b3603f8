#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace camelion {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Counter-based stream: the value for (key, counter) does not depend on the
/// order in which counters are visited.
constexpr std::uint64_t hash_counter(std::uint64_t key, std::uint64_t counter) {
  return mix64(mix64(key) ^ mix64(counter + 0x632BE59BD9B4E019ull));
}

/// Uniform in (0, 1), never exactly 0.
inline double to_unit_open(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal for (key, counter) via Box-Muller on two hashed uniforms.
inline double counter_normal(std::uint64_t key, std::uint64_t counter) {
  const double u1 = to_unit_open(hash_counter(key, 2 * counter));
  const double u2 = to_unit_open(hash_counter(key, 2 * counter + 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Small sequential generator for places that need a plain stream
/// (weight init, shuffling). Portable across standard libraries, unlike
/// std::uniform_real_distribution.
class SplitMix {
 public:
  explicit SplitMix(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next() % n; }

 private:
  std::uint64_t state_;
};

}  // namespace camelion
