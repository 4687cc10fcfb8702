#pragma once

#include <cstdint>
#include <random>

namespace bayes_icp {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive decorrelated child seeds.
inline std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for child stream `index` of `master`. Every random consumer in the
/// library takes its seed from here, so a single master seed fixes a run.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix_seed(mix_seed(master) ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

// Stream tags for derive_seed.
inline constexpr std::uint64_t kBatchStream = 1;
inline constexpr std::uint64_t kNoiseStream = 2;

}  // namespace bayes_icp
