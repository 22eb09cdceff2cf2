#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tabpc {

/// xoshiro256** seeded through SplitMix64.
///
/// Streams: `Rng::stream(seed, i)` derives an independent generator for the
/// i-th unit of work (a sampled row, an epoch, a column) so that results do
/// not depend on how work is scheduled across threads.  The state of stream
/// i is the SplitMix64 expansion of `mix(seed) ^ mix(i + 1)`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  static Rng stream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Draws an index with probability proportional to `weights` (nonnegative,
  /// not necessarily normalized).
  std::size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace tabpc
