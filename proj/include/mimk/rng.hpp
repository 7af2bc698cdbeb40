// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace mimk {

/// SplitMix64 generator. Every random draw in the project goes through this
/// type so that a seed reproduces the same stream on any platform; the
/// standard library distributions are implementation-defined and are not used.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t bound);

  /// Standard normal via Box-Muller (one value per call, second discarded).
  double normal();

  /// Normal(0, std) resampled until it falls inside [-2 std, 2 std].
  double truncated_normal(double std);

 private:
  std::uint64_t state_;
};

/// Mixes several integers into one seed; used to derive per-epoch and
/// per-item streams from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// Fisher-Yates shuffle of [0, n) driven by `rng`, iterating from the back.
std::vector<std::size_t> shuffled_indices(std::size_t n, SplitMix64& rng);

}  // namespace mimk
