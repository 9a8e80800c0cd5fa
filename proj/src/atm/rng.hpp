#pragma once

#include <cstdint>
#include <random>

namespace atm {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Used to derive independent child seeds from a parent
// seed and a small integer tag, so that e.g. replication r, stage t and
// batch b each get their own stream regardless of execution order.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) noexcept {
  return mix_seed(mix_seed(parent) ^ (tag * 0xd1342543de82ef95ULL + 1));
}

template <typename... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag, Tags... more) noexcept {
  return derive_seed(derive_seed(parent, tag), static_cast<std::uint64_t>(more)...);
}

}  // namespace atm
