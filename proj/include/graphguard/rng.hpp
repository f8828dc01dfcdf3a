#pragma once

#include <cstdint>
#include <string_view>

namespace graphguard {

// Deterministic RNG used everywhere randomness is needed. Wraps a
// splitmix64-seeded xoshiro-style generator with hand-rolled draws so the
// stream is identical across platforms and standard-library versions
// (std::uniform_*_distribution makes no such promise).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Warm up so nearby seeds diverge immediately.
    next_u64();
    next_u64();
  }

  std::uint64_t next_u64() {
    // splitmix64.
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be >= 1.
  std::uint64_t uniform_int(std::uint64_t n) {
    // Multiply-shift with rejection of the biased tail.
    for (;;) {
      std::uint64_t x = next_u64();
      __uint128_t m = static_cast<__uint128_t>(x) * n;
      std::uint64_t lo = static_cast<std::uint64_t>(m);
      if (lo >= n || lo >= (0ULL - n) % n) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  // Derive an independent child seed for a named stage. Distinct tags give
  // unrelated streams; the parent stream is not consumed.
  static std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
    std::uint64_t h = root ^ 0x51'7c'c1'b7'27'22'0a'95ULL;
    for (char c : tag) {
      h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
      h *= 0x100000001b3ULL;
      h ^= h >> 29;
    }
    // One splitmix round to spread low-entropy tags.
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
  }

 private:
  std::uint64_t state_;
};

}  // namespace graphguard
