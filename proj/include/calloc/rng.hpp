#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace cal {

// Counter-based deterministic RNG (splitmix64 finalizer over seed + counter).
// Draws depend only on (seed, counter), so a stream can be replayed from its
// seed regardless of platform. derive() produces an independent child stream;
// the child's output does not depend on how many draws the parent has made.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : seed_(seed) {}

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }

  uint64_t next_u64() { return mix(seed_ + (++counter_) * kGamma); }

  RngStream derive(uint64_t stream_id) const {
    return RngStream(mix(seed_ ^ mix(stream_id + kGamma)));
  }

  // Uniform in [0, 1), 53 bits of mantissa.
  double next_uniform() {
    return std::ldexp(static_cast<double>(next_u64() >> 11), -53);
  }

  // Standard normal via Box-Muller; log argument guarded away from zero.
  double next_normal() {
    double u1 = next_uniform();
    double u2 = next_uniform();
    if (u1 <= 0.0) u1 = std::ldexp(1.0, -53);
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // Uniform integer in [0, n); n must be > 0.
  uint64_t next_below(uint64_t n) {
    // Rejection sampling to avoid modulo bias.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (size_t i = xs.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(xs[i - 1], xs[j]);
    }
  }

 private:
  static constexpr uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  uint64_t seed_;
  uint64_t counter_ = 0;
};

}  // namespace cal
