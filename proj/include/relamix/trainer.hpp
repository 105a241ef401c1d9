#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "relamix/data.hpp"
#include "relamix/model.hpp"

namespace relamix {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 10;  // early-stop epochs without val improvement
  std::uint64_t seed = 0;
  bool shuffle = true;
  // 0 = use every training window each epoch; otherwise a deterministic cap
  // on minibatches per epoch (prefix of the shuffled order).
  int max_batches_per_epoch = 0;

  void validate() const;
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

// Per-sample loss: mean over all horizon x d_out elements of squared error.
// Gradient wrt pred is 2 (pred - target) / (horizon * d_out).
std::pair<double, Matrix> mse_loss(const Matrix& pred, const Matrix& target);

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  std::optional<double> r2;  // missing when target variance is zero
};

// Pooled over every element of every sample; r2 uses the pooled target mean.
Metrics compute_metrics(const std::vector<Matrix>& preds, const std::vector<Matrix>& targets);
std::vector<Metrics> compute_metrics_per_feature(const std::vector<Matrix>& preds,
                                                 const std::vector<Matrix>& targets);

struct TrainResult {
  ParameterSet params;  // best-validation checkpoint
  std::vector<EpochStats> history;
  int epochs_run = 0;
};

// Corrupted-to-clean training: shuffled minibatches, Adam, early stopping on
// validation loss with best-checkpoint restoration. Deterministic given seeds.
TrainResult train(const ModelConfig& cfg, const TrainConfig& tcfg,
                  const std::vector<WindowSample>& train_windows,
                  const std::vector<WindowSample>& val_windows);

struct EvalReport {
  std::string model;
  std::string ablation;
  double delay_ratio = 0.0;
  int k = 1;
  Metrics metrics;
  std::vector<Metrics> per_feature;
  long param_count = 0;
  int epochs = 0;
  double wall_time = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t mask_hash = 0;
  std::uint64_t config_hash = 0;
  std::string error;  // nonempty when the grid cell failed
};

std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& json_text);

// Dropout off, strictly non-overlapping eval windows.
EvalReport evaluate(const ModelConfig& cfg, const ParameterSet& params,
                    const std::vector<WindowSample>& eval_windows);

// Repeats the last observed input row over the whole horizon; no parameters.
Matrix persistence_predict(const WindowSample& sample, const ModelConfig& cfg);
EvalReport evaluate_persistence(const ModelConfig& cfg,
                                const std::vector<WindowSample>& eval_windows);

// Single flattened L*d_in -> k*d_out linear map trained with the same loop.
struct LinearBaseline {
  Matrix w;  // (L*d_in) x (k*d_out)
  Vector b;
  ModelConfig cfg;

  Matrix predict(const WindowSample& sample) const;
  long param_count() const { return w.size() + b.size(); }
};

struct LinearTrainResult {
  LinearBaseline model;
  std::vector<EpochStats> history;
  int epochs_run = 0;
};

LinearTrainResult train_linear(const ModelConfig& cfg, const TrainConfig& tcfg,
                               const std::vector<WindowSample>& train_windows,
                               const std::vector<WindowSample>& val_windows);
EvalReport evaluate_linear(const LinearBaseline& model,
                           const std::vector<WindowSample>& eval_windows);

struct DatasetSpec {
  std::string kind = "gbm_ohlcv";  // synth kind, or "csv"
  std::string csv_path;
  std::size_t length = 100000;
  std::uint64_t seed = 7;
  SynthParams synth;
};

struct GridConfig {
  DatasetSpec dataset;
  std::vector<double> delay_ratios{0.15, 0.25, 0.35};
  std::vector<int> horizons{1, 5, 7, 10};
  std::vector<std::string> models{"relamix", "no_compression", "no_residual", "persistence",
                                  "linear"};
  std::vector<std::uint64_t> seeds{1};
  ModelConfig model;
  TrainConfig train;
};

struct GridResult {
  std::vector<EvalReport> reports;  // canonical order: (model, ratio, k, seed)
  std::vector<std::string> failures;
};

// One report per (model, ratio, horizon, seed); masks are shared per
// (ratio, seed) across models and horizons so every cell sees the same
// corruption. Cell failures are recorded, not propagated.
GridResult run_grid(const GridConfig& cfg);

void sort_reports(std::vector<EvalReport>& reports);

}  // namespace relamix
