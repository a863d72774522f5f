#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace curator {

/// Unbiased draw in [0, bound). Unlike std::uniform_int_distribution, the
/// sequence is identical across standard library implementations.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t bound) {
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = kMax - kMax % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace curator
