#pragma once

// Platform-stable random streams.
//
// Every random draw in the workbench is addressed by a path of integers
// (base seed, stream label, step, position, ...) and derived by repeated
// splitmix64 mixing:
//
//     derive(base, a)       = splitmix64(base ^ splitmix64(a))
//     derive(base, a, b...) = derive(derive(base, a), b...)
//
// Nothing here depends on std:: distributions, whose output differs between
// standard library implementations.

#include <cstdint>
#include <initializer_list>

namespace ibdiag {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t ordinal) {
  return splitmix64(base ^ splitmix64(ordinal));
}

constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::initializer_list<std::uint64_t> path) {
  for (std::uint64_t ordinal : path) base = derive_seed(base, ordinal);
  return base;
}

// Uniform double in [0, 1) with 53 random bits.
constexpr double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Stream labels. Values are part of the reproducibility contract.
namespace stream {
constexpr std::uint64_t kToken = 1;
constexpr std::uint64_t kPath = 2;
constexpr std::uint64_t kPrior = 3;
constexpr std::uint64_t kSample = 4;
constexpr std::uint64_t kValidation = 5;
constexpr std::uint64_t kSubset = 6;
constexpr std::uint64_t kBootstrap = 7;
constexpr std::uint64_t kFixture = 8;
}  // namespace stream

// Sequential generator (splitmix64 counter) for places that need a stream of
// draws, e.g. Fisher-Yates shuffles.
class Rng {
 public:
  explicit constexpr Rng(std::uint64_t seed) : state_(seed) {}

  constexpr std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  constexpr double uniform() { return to_unit(next()); }

  // Unbiased integer in [0, n) by rejection. n must be positive.
  constexpr std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace ibdiag
