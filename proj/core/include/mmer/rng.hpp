#pragma once

#include <cmath>
#include <cstdint>

namespace mmer {

// Deterministic, platform-independent PRNG (xoshiro256++ seeded via
// splitmix64). The standard <random> distributions are implementation
// defined, which would break bit-for-bit reproducibility across
// toolchains, so the uniform/gauss transforms live here as well.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection-free modulo is biased for huge n;
  // n here is always far below 2^32 so the bias is negligible, but use
  // Lemire-style rejection anyway to keep draws exact.
  uint64_t uniform_u64(uint64_t n) {
    if (n == 0) return 0;
    uint64_t x, r;
    do {
      x = next_u64();
      r = x % n;
    } while (x - r > uint64_t(0) - n);
    return r;
  }

  int uniform_int(int n) { return static_cast<int>(uniform_u64(static_cast<uint64_t>(n))); }

  // Standard normal via Box-Muller; consumes two uniforms per pair.
  double gauss() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Independent child stream; used so per-item work stays deterministic
  // regardless of scheduling order.
  Rng derive(uint64_t stream) const {
    uint64_t x = state_[0] ^ (stream * 0x9e3779b97f4a7c15ULL);
    x ^= state_[3] + 0xd1b54a32d192ed03ULL;
    return Rng(x);
  }

 private:
  static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t state_[4];
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace mmer
