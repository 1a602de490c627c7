#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace canm {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds from a root seed.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-style stream derivation: derive_seed(root, {a, b, c}) is a pure
// function of its arguments, so every consumer gets its own reproducible stream.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t s = mix64(root);
  for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

inline Rng make_rng(std::uint64_t root, std::initializer_list<std::uint64_t> path = {}) {
  return Rng(derive_seed(root, path));
}

// Stream tags, kept in one place so no two consumers share a stream by accident.
namespace stream {
inline constexpr std::uint64_t cause = 1;
inline constexpr std::uint64_t mechanism = 2;
inline constexpr std::uint64_t stage_noise = 3;
inline constexpr std::uint64_t init = 10;
inline constexpr std::uint64_t shuffle = 11;
inline constexpr std::uint64_t mc = 12;
inline constexpr std::uint64_t eval = 13;
inline constexpr std::uint64_t split = 14;
inline constexpr std::uint64_t permutation = 20;
inline constexpr std::uint64_t gmm = 21;
inline constexpr std::uint64_t bench = 30;
inline constexpr std::uint64_t theory = 40;
}  // namespace stream

}  // namespace canm
