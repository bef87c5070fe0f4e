#pragma once

#include <cstdint>
#include <random>

namespace nmargof {

using Rng = std::mt19937_64;

/// Named child streams of the run seed. Every random draw in the library
/// comes from a stream created here; there is no global generator.
enum class Stream : std::uint64_t {
  kBootstrap = 0xB0075,
  kSimulation = 0x51A1,
  kCovariates = 0xC0FA,
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of child `index` of stream `stream` under `seed`.
constexpr std::uint64_t child_seed(std::uint64_t seed, Stream stream,
                                   std::uint64_t index) noexcept {
  return mix64(mix64(seed ^ mix64(static_cast<std::uint64_t>(stream))) +
               index);
}

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index) {
  const std::uint64_t s = child_seed(seed, stream, index);
  std::seed_seq seq{static_cast<std::uint32_t>(s),
                    static_cast<std::uint32_t>(s >> 32)};
  return Rng(seq);
}

}  // namespace nmargof
