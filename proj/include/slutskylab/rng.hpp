#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace slutsky {

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Per-point seed from (master seed, point index, replicate).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t point, std::uint64_t replicate = 0) {
  return splitmix64(splitmix64(master ^ splitmix64(point + 1)) + replicate);
}

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace slutsky
