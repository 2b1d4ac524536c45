#pragma once

#include <cstdint>
#include <random>

namespace photodyn {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for sweep point `point`, repetition `rep` of a run with `master` seed.
constexpr std::uint64_t substream_seed(std::uint64_t master, std::uint64_t point, std::uint64_t rep = 0) {
  return mix64(mix64(mix64(master) ^ (point + 0x632be59bd9b4e019ULL)) ^ (rep + 0x8cb92ba72f3d8dd7ULL));
}

}  // namespace photodyn
