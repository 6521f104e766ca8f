#pragma once

#include <cstdint>
#include <random>

namespace ksadv {

/// splitmix64 finalizer applied to seed + counter * golden gamma.
/// Any (seed, counter) pair gives an independent 64-bit value without shared state.
inline std::uint64_t splitmix64(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t z = seed + (counter + 1) * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Generator for sub-stream `stream` of a global seed.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(splitmix64(seed, stream));
}

}  // namespace ksadv
