#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>

namespace atlas {

/// Pairwise (cascade) summation; the fixed tree makes the result independent
/// of how the inputs were produced.
inline double pairwise_sum(std::span<const double> xs) {
  constexpr std::size_t kLeaf = 32;
  if (xs.size() <= kLeaf) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

/// SplitMix64 step. Used wherever a portable, seed-reproducible stream is
/// needed (standard distributions are implementation-defined).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Portable RNG producing uniform doubles in [0, 1) and [-1, 1).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() { return splitmix64(state_); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double symmetric() { return 2.0 * uniform() - 1.0; }
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

private:
  std::uint64_t state_;
};

inline bool is_finite(double x) {
  return x == x && x != std::numeric_limits<double>::infinity() &&
         x != -std::numeric_limits<double>::infinity();
}

}  // namespace atlas
