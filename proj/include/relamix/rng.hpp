#pragma once

#include <cstdint>

namespace relamix {

// Counter-based splitmix64 stream. All randomness in the project flows through
// explicitly seeded instances of this; no global state, identical output on
// every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), counter_(0) {}

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; draws two uniforms per call.
  double normal();

  // Index in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Independent child stream; deterministic function of (this seed, stream id).
  Rng split(std::uint64_t stream) const {
    Rng child(seed_ ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
    return child;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace relamix
