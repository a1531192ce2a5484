// SPDX-License-Identifier: Apache-2.0
#include "drum/rng.hpp"

#include <cmath>
#include <numbers>

namespace drum {

double Rng::normal() {
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::int64_t> Rng::permutation(std::int64_t n) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::int64_t{0});
  shuffle(std::span<std::int64_t>(order));
  return order;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  Rng mixer(seed ^ (stream * 0xD1B54A32D192ED03ULL));
  return mixer.next();
}

}  // namespace drum
