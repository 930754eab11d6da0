#ifndef RETRACK_RANDOM_HPP
#define RETRACK_RANDOM_HPP

#include "retrack/matrix.hpp"

#include <cstdint>
#include <random>

namespace retrack {

using Rng = std::mt19937_64;

// Sub-seed scheme: every consumer of randomness owns a fixed stream id, and
// its generator is seeded with splitmix64(seed ^ splitmix64(stream)) chained
// over any further counters (split, sample index, epoch).
namespace stream {
inline constexpr std::uint64_t kProjections = 1;
inline constexpr std::uint64_t kLatents = 2;
inline constexpr std::uint64_t kNoise = 3;
inline constexpr std::uint64_t kNegatives = 4;
inline constexpr std::uint64_t kInit = 5;
inline constexpr std::uint64_t kShuffle = 6;
inline constexpr std::uint64_t kGradcheck = 7;
}  // namespace stream

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t counter) {
  return splitmix64(seed ^ splitmix64(counter));
}

template <typename... Counters>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t counter, Counters... rest) {
  return derive_seed(derive_seed(seed, counter), static_cast<std::uint64_t>(rest)...);
}

/// Standard normal draws. Box-Muller over the raw 64-bit stream, so the
/// sequence does not depend on the standard library's distribution code.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

  double operator()();
  double uniform();

  /// rows x cols i.i.d. N(0, stddev^2).
  Matrix matrix(Eigen::Index rows, Eigen::Index cols, double stddev = 1.0);

  Rng& engine() { return rng_; }

 private:
  Rng rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace retrack

#endif  // RETRACK_RANDOM_HPP
