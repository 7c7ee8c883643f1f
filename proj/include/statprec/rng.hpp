#pragma once

#include <cstdint>
#include <random>

#include "statprec/types.hpp"

namespace statprec {

using Rng = std::mt19937_64;

// Child seed for stream `stream` of a parent seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

// Draws n i.i.d. circularly-symmetric complex normal entries CN(0, variance).
CVec complex_normal(Index n, double variance, Rng& rng);

}  // namespace statprec
