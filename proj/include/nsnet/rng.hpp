#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace nsnet {

/// SplitMix64 finalizer; also used to expand seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Child seed for stream `index` of `base`: splitmix64 applied to
/// base + (index + 1) * 0x9E3779B97F4A7C15, so streams are platform-stable.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/**
 * xoshiro256** seeded through SplitMix64.
 *
 * All distributions are implemented here rather than via <random> so that
 * generated corpora are bit-identical across standard libraries.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();

  /// Uniform integer in [lo, hi] (inclusive), unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n);
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  bool bernoulli(double p) { return uniform01() < p; }
  /// Number of trials up to and including the first success (support >= 1).
  int geometric(double p);

  Rng split(std::uint64_t index) const;

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> s_{};
  std::uint64_t seed_;
};

}  // namespace nsnet
