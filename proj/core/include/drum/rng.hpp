// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace drum {

/// High 64 bits of the 128-bit product a * b.
constexpr std::uint64_t mul_high_u64(std::uint64_t a, std::uint64_t b) {
  const std::uint64_t a_lo = a & 0xFFFFFFFFULL, a_hi = a >> 32;
  const std::uint64_t b_lo = b & 0xFFFFFFFFULL, b_hi = b >> 32;
  const std::uint64_t lo_lo = a_lo * b_lo;
  const std::uint64_t hi_lo = a_hi * b_lo;
  const std::uint64_t lo_hi = a_lo * b_hi;
  const std::uint64_t cross = (lo_lo >> 32) + (hi_lo & 0xFFFFFFFFULL) + lo_hi;
  return a_hi * b_hi + (hi_lo >> 32) + (cross >> 32);
}

/// SplitMix64 (Steele, Lea & Flood 2014). Every derived quantity below is
/// defined in terms of next() so streams reproduce bit-for-bit in any
/// language:
///   uniform()        = (next() >> 11) * 2^-53
///   uniform_index(n) = high 64 bits of next() * n
///   normal()         = Box-Muller, cos branch, u1 = 1 - uniform()
///   shuffle          = Fisher-Yates from the back, j = uniform_index(i + 1)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  std::uint64_t uniform_index(std::uint64_t n) {
    return mul_high_u64(next(), n);
  }

  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Seeded permutation of 0..n-1.
  std::vector<std::int64_t> permutation(std::int64_t n);

 private:
  std::uint64_t state_;
};

/// Mixes a base seed with a stream tag so sub-streams do not overlap.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace drum
