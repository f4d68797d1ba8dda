#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>

namespace otobias {

/// One step of SplitMix64; advances `state` and returns the mixed output.
std::uint64_t splitmix64(std::uint64_t& state);

/// Portable seeded generator: xoshiro256** with its 256-bit state expanded
/// from a 64-bit seed by SplitMix64.
///
/// Every derived draw (bounded integers, shuffles, normals) is implemented
/// here instead of going through <random> distributions, whose algorithms
/// differ between standard libraries. A given seed therefore yields the same
/// splits and synthetic data on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();

  /// Uniform integer in [0, bound) by rejection sampling; bound > 0.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform double in [0, 1) built from the top 53 bits.
  double uniform();

  /// Standard normal variate (Box-Muller, one variate per call).
  double normal();

  /// Fisher-Yates shuffle driven by below().
  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> state_{};
};

}  // namespace otobias
