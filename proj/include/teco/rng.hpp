#pragma once

// Counter-based deterministic RNG. Every stream is a pure function of
// (key, counter), so state never has to be checkpointed: training code
// derives a fresh stream from (master seed, purpose, step) wherever it
// needs randomness, and parallel generators split by index without
// coordination.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace teco {

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t mix2(uint64_t a, uint64_t b) {
  return splitmix64(splitmix64(a) ^ (0x9e3779b97f4a7c15ull + b));
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0)
      : key_(detail::mix2(seed, stream)) {}

  // Independent child stream; pure function of (this stream, index).
  Rng split(uint64_t index) const { return Rng(key_, index + 1); }

  uint64_t next_u64() { return detail::mix2(key_, counter_++); }

  uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

  // Uniform in [0, bound).
  uint64_t next_below(uint64_t bound) {
    // Rejection-free modulo is fine at our scales (bound << 2^64).
    return next_u64() % bound;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  float next_float() { return static_cast<float>(next_double()); }

  // Standard normal via Box-Muller; consumes two draws per call.
  double next_normal() {
    const double u1 = 1.0 - next_double();  // (0, 1]
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  uint64_t key() const { return key_; }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace teco
