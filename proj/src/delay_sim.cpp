#include "relamix/delay_sim.hpp"

#include <fstream>

#include "relamix/rng.hpp"

namespace relamix {

StagnationMask generate_mask(std::size_t length, double delay_ratio, std::uint64_t seed,
                             double markov_burst) {
  require(length >= 1, "generate_mask: length must be >= 1");
  require(delay_ratio >= 0.0 && delay_ratio < 1.0, "generate_mask: delay_ratio must be in [0, 1)");
  StagnationMask mask;
  mask.states.resize(length);
  mask.target_ratio = delay_ratio;
  mask.seed = seed;
  mask.states[0] = 1;
  Rng rng(seed);
  if (markov_burst <= 0.0) {
    for (std::size_t t = 1; t < length; ++t)
      mask.states[t] = rng.bernoulli(delay_ratio) ? 0 : 1;
  } else {
    // Two-state chain with stationary stagnation fraction delay_ratio and
    // mean stagnation run 1/(1 - burst).
    const double stay_stale = markov_burst;
    const double to_stale =
        delay_ratio <= 0.0 ? 0.0 : delay_ratio * (1.0 - stay_stale) / (1.0 - delay_ratio);
    bool stale = false;
    for (std::size_t t = 1; t < length; ++t) {
      stale = rng.bernoulli(stale ? stay_stale : to_stale);
      mask.states[t] = stale ? 0 : 1;
    }
  }
  return mask;
}

CorruptedSeries apply_zoh(const Matrix& clean, const StagnationMask& mask) {
  require(static_cast<std::size_t>(clean.rows()) == mask.size(),
          "apply_zoh: series length " + std::to_string(clean.rows()) + " != mask length " +
              std::to_string(mask.size()));
  require(!mask.states.empty() && mask.states[0] == 1, "apply_zoh: mask must start with 1");
  CorruptedSeries out;
  out.mask = mask;
  out.observed.resize(clean.rows(), clean.cols());
  out.observed.row(0) = clean.row(0);
  for (Eigen::Index t = 1; t < clean.rows(); ++t) {
    if (mask.states[static_cast<std::size_t>(t)])
      out.observed.row(t) = clean.row(t);
    else
      out.observed.row(t) = out.observed.row(t - 1);
  }
  return out;
}

StalenessStats staleness_stats(const StagnationMask& mask) {
  StalenessStats s;
  std::size_t zeros = 0, run = 0;
  for (std::uint8_t v : mask.states) {
    if (v == 0) {
      ++zeros;
      ++run;
    } else if (run > 0) {
      s.run_histogram[run] += 1;
      s.max_run = std::max(s.max_run, run);
      run = 0;
    }
  }
  if (run > 0) {
    s.run_histogram[run] += 1;
    s.max_run = std::max(s.max_run, run);
  }
  s.stagnation_fraction = static_cast<double>(zeros) / static_cast<double>(mask.size());
  return s;
}

void save_mask_csv(const StagnationMask& mask, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_mask_csv: cannot open " + path);
  out << "t,s_t\n";
  for (std::size_t t = 0; t < mask.size(); ++t)
    out << t << ',' << static_cast<int>(mask.states[t]) << '\n';
  if (!out) throw std::runtime_error("save_mask_csv: write failed for " + path);
}

StagnationMask load_mask_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_mask_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,s_t", 0) != 0)
    throw std::runtime_error("load_mask_csv: bad header in " + path);
  StagnationMask mask;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("load_mask_csv: malformed row in " + path);
    const int v = std::stoi(line.substr(comma + 1));
    if (v != 0 && v != 1) throw std::runtime_error("load_mask_csv: state not in {0,1}");
    mask.states.push_back(static_cast<std::uint8_t>(v));
  }
  if (mask.states.empty()) throw std::runtime_error("load_mask_csv: empty mask in " + path);
  return mask;
}

std::uint64_t mask_hash(const StagnationMask& mask) {
  // FNV-1a over the state bytes.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t v : mask.states) {
    h ^= v;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace relamix
