#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relamix/delay_sim.hpp"
#include "relamix/matrix.hpp"
#include "relamix/model.hpp"

namespace relamix {

struct TimeSeries {
  std::vector<std::int64_t> timestamps;  // strictly increasing, seconds
  Matrix values;                         // T x D
  std::vector<std::string> feature_names;

  Eigen::Index length() const { return values.rows(); }
  Eigen::Index features() const { return values.cols(); }
};

// Header must name at least timestamp,open,high,low,close,volume. Rows with
// non-finite values or non-increasing timestamps are rejected with the line
// number.
TimeSeries load_csv(const std::string& path);
void save_csv(const TimeSeries& series, const std::string& path);

struct SynthParams {
  double noise_scale = 0.05;   // sine_mixture additive noise
  double gbm_drift = 0.0;      // per-step drift
  double gbm_vol = 2e-4;       // per-step volatility
  double wick_scale = 5e-5;    // high/low extension beyond the open-close body
  double volume_persistence = 0.997;  // AR(1) coefficient of log-volume
  double volume_noise = 0.03;         // i.i.d. log-volume noise on top of the AR component
};

// sine_mixture: per feature, a sum of three integer-period sinusoids plus
// Gaussian noise. gbm_ohlcv: geometric Brownian close path with OHLC wicks and
// log-normal volume. Deterministic given seed.
TimeSeries synth_series(const std::string& kind, std::size_t length, std::uint64_t seed,
                        const SynthParams& params = {});

struct SplitSeries {
  TimeSeries train;
  TimeSeries val;
  TimeSeries test;
};

// Contiguous chronological segments with boundaries at floor(T * cumfrac).
SplitSeries chronological_split(const TimeSeries& series, double train_frac = 0.70,
                                double val_frac = 0.15);

class Standardizer {
 public:
  static Standardizer fit(const TimeSeries& train);

  Matrix apply(const Matrix& values) const;
  Matrix invert(const Matrix& values) const;

  const Vector& mean() const { return mean_; }
  const Vector& stddev() const { return std_; }

 private:
  Vector mean_;
  Vector std_;
};

struct WindowSample {
  Matrix input;   // L x d_in, from the corrupted series
  Matrix target;  // k x d_out, from the clean series
  Eigen::Index origin = 0;  // index t of the last input row
};

enum class WindowMode { train, eval };

// Train mode: stride 1 dense windows. Eval mode: stride L + k so no two
// samples share any input or target timestep.
std::vector<WindowSample> make_windows(const Matrix& corrupted, const Matrix& clean,
                                       const ModelConfig& cfg, WindowMode mode);

}  // namespace relamix
