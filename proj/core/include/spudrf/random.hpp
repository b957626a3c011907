#pragma once

#include <cstdint>
#include <random>

namespace spudrf {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a master seed and a stream tag
/// (splitmix64 finalizer), so components never share generator state.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace streams {
inline constexpr std::uint64_t kBackboneInit = 1;
inline constexpr std::uint64_t kTreeIndexMap = 2;
inline constexpr std::uint64_t kLeafInit = 3;
inline constexpr std::uint64_t kBatchOrder = 4;
inline constexpr std::uint64_t kSplit = 5;
inline constexpr std::uint64_t kLeafBatches = 6;
}  // namespace streams

}  // namespace spudrf
