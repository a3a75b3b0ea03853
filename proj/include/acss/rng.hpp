#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace acss {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; good avalanche, used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derive an independent child seed for a named stream ("signal", "matrix",
/// "noise", "split", ...). Streams never share state, so each component of a
/// trial can be regenerated on its own.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream) noexcept {
  return mix64(parent ^ mix64(fnv1a64(stream)));
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
  return mix64(mix64(parent) + 0x632be59bd9b4e019ULL * (index + 1));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace acss
