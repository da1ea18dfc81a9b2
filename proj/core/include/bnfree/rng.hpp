#pragma once

#include <cstdint>
#include <random>

namespace bnfree {

/// Independent purposes drawing from one run seed.
enum class RngStream : uint32_t {
  kInit = 1,
  kShuffle = 2,
  kAugment = 3,
  kDataPattern = 4,
  kDataTrain = 5,
  kDataTest = 6,
  kTest = 7,
};

inline std::mt19937_64 make_rng(uint64_t seed, RngStream stream) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(stream)};
  return std::mt19937_64(seq);
}

/// splitmix64 finaliser; derives well-separated child seeds.
constexpr uint64_t derive_seed(uint64_t base, uint64_t index) {
  uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace bnfree
