#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gxn {

using Rng = std::mt19937_64;

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Every random consumer draws from a named sub-stream of the run seed
// ("init", "negatives", "folds", "synth", ...).
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view stream) {
  return splitmix64(splitmix64(seed) ^ fnv1a(stream));
}

inline Rng make_rng(std::uint64_t seed, std::string_view stream) {
  return Rng(stream_seed(seed, stream));
}

inline std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 1));
}

}  // namespace gxn
