#pragma once

#include <cstdint>

namespace advchar {

// SplitMix64 finalizer; derives independent stream seeds from (base, stream)
// so per-epoch and per-example randomness never depends on execution order.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace advchar
