#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "relamix/matrix.hpp"

namespace relamix {

struct StagnationMask {
  std::vector<std::uint8_t> states;  // 1 = update, 0 = stagnation; states[0] is always 1
  double target_ratio = 0.0;
  std::uint64_t seed = 0;

  std::size_t size() const { return states.size(); }
};

struct CorruptedSeries {
  Matrix observed;  // same shape as the clean values
  StagnationMask mask;
};

// i.i.d. Bernoulli stagnation with P(s_t = 0) = delay_ratio for t >= 2; the
// first step is always a valid update. Pure function of (length, ratio, seed).
// markov_burst > 0 switches to a bursty two-state chain with the same
// stationary stagnation fraction (experimental; not used by the benchmarks).
StagnationMask generate_mask(std::size_t length, double delay_ratio, std::uint64_t seed,
                             double markov_burst = 0.0);

// Zero-order hold: wherever the mask is 0 the whole row repeats the previous
// observed row; wherever it is 1 the row equals the clean row exactly.
CorruptedSeries apply_zoh(const Matrix& clean, const StagnationMask& mask);

struct StalenessStats {
  double stagnation_fraction = 0.0;
  std::map<std::size_t, std::size_t> run_histogram;  // zero-run length -> count
  std::size_t max_run = 0;
};

StalenessStats staleness_stats(const StagnationMask& mask);

// CSV with header "t,s_t", one row per step; round-trips bit-exactly.
void save_mask_csv(const StagnationMask& mask, const std::string& path);
StagnationMask load_mask_csv(const std::string& path);

std::uint64_t mask_hash(const StagnationMask& mask);

}  // namespace relamix
