#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "dasr/core/error.hpp"

namespace dasr {

/// Deterministic xoshiro256++ stream. Every random draw in the project flows
/// through this type: the standard-library distributions are
/// implementation-defined and would break bit-reproducibility across
/// toolchains, so uniform and normal variates are generated explicitly here.
///
/// The full generator state is four u64 words and round-trips through
/// checkpoints exactly.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    // SplitMix64 expansion of the seed into the initial state.
    uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  /// Independent stream for a (seed, index) pair, e.g. one per batch item.
  static Rng derive(uint64_t seed, uint64_t index) {
    uint64_t x = seed;
    uint64_t a = splitmix64(x);
    x = index ^ 0x9e3779b97f4a7c15ULL;
    uint64_t b = splitmix64(x);
    return Rng(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
  }

  static Rng from_state(const std::array<uint64_t, 4>& s) {
    Rng r(0);
    r.state_ = s;
    return r;
  }

  std::array<uint64_t, 4> state() const { return state_; }

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

  /// Uniform double in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi). Degenerate lo == hi returns lo.
  double uniform(double lo, double hi) {
    if (lo > hi) throw ParamError("uniform: empty range [lo > hi]");
    return lo + (hi - lo) * uniform();
  }

  /// Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    if (lo > hi) throw ParamError("uniform_int: empty range");
    const uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  /// Standard normal via Box-Muller (cosine branch only, no cached state).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  bool operator==(const Rng& other) const { return state_ == other.state_; }

 private:
  static uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  std::array<uint64_t, 4> state_{};
};

}  // namespace dasr
