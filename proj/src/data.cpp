#include "relamix/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "relamix/rng.hpp"

namespace relamix {

namespace {

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.push_back("");
  return out;
}

const std::vector<std::string> kRequired = {"timestamp", "open", "high",
                                            "low",       "close", "volume"};

}  // namespace

TimeSeries load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_line(line, ',');
  for (const auto& col : kRequired)
    if (std::find(header.begin(), header.end(), col) == header.end())
      throw std::runtime_error("load_csv: missing column '" + col + "' in " + path);
  std::size_t ts_col = 0;
  std::vector<std::size_t> value_cols;
  TimeSeries series;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "timestamp") {
      ts_col = i;
    } else {
      value_cols.push_back(i);
      series.feature_names.push_back(header[i]);
    }
  }

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_line(line, ',');
    if (fields.size() != header.size())
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(fields.size()));
    std::int64_t ts;
    std::vector<double> row(value_cols.size());
    try {
      ts = std::stoll(fields[ts_col]);
      for (std::size_t j = 0; j < value_cols.size(); ++j) row[j] = std::stod(fields[value_cols[j]]);
    } catch (const std::exception&) {
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) + ": parse failure");
    }
    for (double v : row)
      if (!std::isfinite(v))
        throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                                 ": non-finite value");
    if (!series.timestamps.empty() && ts <= series.timestamps.back())
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                               ": timestamp not strictly increasing");
    series.timestamps.push_back(ts);
    rows.push_back(std::move(row));
  }
  series.values.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(value_cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      series.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return series;
}

void save_csv(const TimeSeries& series, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  out << "timestamp";
  for (const auto& name : series.feature_names) out << ',' << name;
  out << '\n';
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < series.length(); ++i) {
    out << series.timestamps[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < series.features(); ++j) out << ',' << series.values(i, j);
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_csv: write failed for " + path);
}

TimeSeries synth_series(const std::string& kind, std::size_t length, std::uint64_t seed,
                        const SynthParams& params) {
  require(length >= 1, "synth_series: length must be >= 1");
  TimeSeries series;
  series.feature_names = {"open", "high", "low", "close", "volume"};
  const Eigen::Index T = static_cast<Eigen::Index>(length);
  const Eigen::Index D = 5;
  series.values.resize(T, D);
  series.timestamps.resize(length);
  std::iota(series.timestamps.begin(), series.timestamps.end(), 1700000000LL);
  Rng rng(seed);

  if (kind == "sine_mixture") {
    // Integer periods so the clean signal is exactly periodic at their LCM.
    const double periods[3] = {16.0, 24.0, 36.0};
    double amp[D][3], phase[D][3];
    for (Eigen::Index d = 0; d < D; ++d)
      for (int i = 0; i < 3; ++i) {
        amp[d][i] = rng.uniform(0.5, 1.5);
        phase[d][i] = rng.uniform(0.0, 2.0 * M_PI);
      }
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index d = 0; d < D; ++d) {
        double v = 0.0;
        for (int i = 0; i < 3; ++i)
          v += amp[d][i] * std::sin(2.0 * M_PI * static_cast<double>(t) / periods[i] + phase[d][i]);
        if (params.noise_scale > 0.0) v += params.noise_scale * rng.normal();
        series.values(t, d) = v;
      }
    return series;
  }

  if (kind == "gbm_ohlcv") {
    double close = 100.0;
    // Log-volume follows a stationary AR(1): marginally log-normal, but with the
    // strong autocorrelation (volume clustering) real markets exhibit.
    const double phi = params.volume_persistence;
    const double vol_sigma = 0.3;
    double u = rng.normal();  // normalized log-volume state
    for (Eigen::Index t = 0; t < T; ++t) {
      const double open = close;
      const double r = (params.gbm_drift - 0.5 * params.gbm_vol * params.gbm_vol) +
                       params.gbm_vol * rng.normal();
      close = open * std::exp(r);
      const double body_hi = std::max(open, close);
      const double body_lo = std::min(open, close);
      const double high = body_hi * std::exp(params.wick_scale * std::abs(rng.normal()));
      const double low = body_lo * std::exp(-params.wick_scale * std::abs(rng.normal()));
      if (t > 0) u = phi * u + std::sqrt(1.0 - phi * phi) * rng.normal();
      const double volume = 1000.0 * std::exp(vol_sigma * u + params.volume_noise * rng.normal());
      series.values(t, 0) = open;
      series.values(t, 1) = high;
      series.values(t, 2) = low;
      series.values(t, 3) = close;
      series.values(t, 4) = volume;
    }
    return series;
  }

  throw std::invalid_argument("synth_series: unknown kind '" + kind + "'");
}

namespace {

TimeSeries slice_series(const TimeSeries& s, Eigen::Index begin, Eigen::Index count) {
  TimeSeries out;
  out.feature_names = s.feature_names;
  out.values = s.values.middleRows(begin, count);
  out.timestamps.assign(s.timestamps.begin() + begin, s.timestamps.begin() + begin + count);
  return out;
}

}  // namespace

SplitSeries chronological_split(const TimeSeries& series, double train_frac, double val_frac) {
  require(train_frac > 0 && val_frac > 0 && train_frac + val_frac < 1.0,
          "chronological_split: fractions must be positive and sum below 1");
  const Eigen::Index T = series.length();
  const Eigen::Index n_train = static_cast<Eigen::Index>(std::floor(T * train_frac));
  const Eigen::Index n_val =
      static_cast<Eigen::Index>(std::floor(T * (train_frac + val_frac))) - n_train;
  const Eigen::Index n_test = T - n_train - n_val;
  require(n_train >= 1 && n_val >= 1 && n_test >= 1,
          "chronological_split: series too short for the requested fractions");
  SplitSeries out;
  out.train = slice_series(series, 0, n_train);
  out.val = slice_series(series, n_train, n_val);
  out.test = slice_series(series, n_train + n_val, n_test);
  return out;
}

Standardizer Standardizer::fit(const TimeSeries& train) {
  Standardizer s;
  const Eigen::Index T = train.length();
  require(T >= 2, "Standardizer: need at least two rows");
  s.mean_ = train.values.colwise().mean().transpose();
  s.std_.resize(train.features());
  for (Eigen::Index j = 0; j < train.features(); ++j) {
    const double var = (train.values.col(j).array() - s.mean_(j)).square().sum() / T;
    s.std_(j) = std::sqrt(var);
    require(s.std_(j) > 0.0, "Standardizer: feature '" +
                                 (j < static_cast<Eigen::Index>(train.feature_names.size())
                                      ? train.feature_names[static_cast<std::size_t>(j)]
                                      : std::to_string(j)) +
                                 "' has zero variance");
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& values) const {
  require(values.cols() == mean_.size(), "Standardizer::apply: feature count mismatch");
  return (values.rowwise() - mean_.transpose()).array().rowwise() /
         std_.transpose().array();
}

Matrix Standardizer::invert(const Matrix& values) const {
  require(values.cols() == mean_.size(), "Standardizer::invert: feature count mismatch");
  return (values.array().rowwise() * std_.transpose().array()).matrix().rowwise() +
         mean_.transpose();
}

std::vector<WindowSample> make_windows(const Matrix& corrupted, const Matrix& clean,
                                       const ModelConfig& cfg, WindowMode mode) {
  require(corrupted.rows() == clean.rows(), "make_windows: corrupted/clean length mismatch");
  require(corrupted.cols() >= cfg.d_in && clean.cols() >= cfg.d_out,
          "make_windows: feature counts below config");
  const Eigen::Index T = clean.rows();
  const Eigen::Index L = cfg.window_len;
  const Eigen::Index k = cfg.horizon;
  require(T >= L + k, "make_windows: series shorter than window + horizon");
  const Eigen::Index stride = mode == WindowMode::train ? 1 : L + k;
  std::vector<WindowSample> samples;
  for (Eigen::Index t = L - 1; t + k < T; t += stride) {
    WindowSample s;
    s.input = corrupted.block(t - L + 1, 0, L, cfg.d_in);
    s.target = clean.block(t + 1, 0, k, cfg.d_out);
    s.origin = t;
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace relamix
