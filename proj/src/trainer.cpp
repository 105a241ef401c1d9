#include "relamix/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "relamix/rng.hpp"

namespace relamix {

void TrainConfig::validate() const {
  require(learning_rate > 0.0, "train config: learning_rate must be > 0");
  require(batch_size >= 1, "train config: batch_size must be >= 1");
  require(max_epochs >= 1, "train config: max_epochs must be >= 1");
  require(patience >= 1, "train config: patience must be >= 1");
  require(max_batches_per_epoch >= 0, "train config: max_batches_per_epoch must be >= 0");
}

std::pair<double, Matrix> mse_loss(const Matrix& pred, const Matrix& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(),
          "mse_loss: shapes differ, " + shape_str(pred) + " vs " + shape_str(target));
  const double n = static_cast<double>(pred.size());
  const Matrix diff = pred - target;
  const double loss = diff.array().square().sum() / n;
  return {loss, Matrix(2.0 / n * diff)};
}

Metrics compute_metrics(const std::vector<Matrix>& preds, const std::vector<Matrix>& targets) {
  require(preds.size() == targets.size() && !preds.empty(),
          "compute_metrics: empty or mismatched inputs");
  double se = 0.0, ae = 0.0, tsum = 0.0;
  double n = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    require(preds[i].rows() == targets[i].rows() && preds[i].cols() == targets[i].cols(),
            "compute_metrics: shape mismatch at sample " + std::to_string(i));
    se += (preds[i] - targets[i]).array().square().sum();
    ae += (preds[i] - targets[i]).array().abs().sum();
    tsum += targets[i].sum();
    n += static_cast<double>(targets[i].size());
  }
  Metrics m;
  m.mse = se / n;
  m.mae = ae / n;
  const double tbar = tsum / n;
  double ss_tot = 0.0;
  for (const auto& t : targets) ss_tot += (t.array() - tbar).square().sum();
  if (ss_tot > 0.0) m.r2 = 1.0 - se / ss_tot;
  return m;
}

std::vector<Metrics> compute_metrics_per_feature(const std::vector<Matrix>& preds,
                                                 const std::vector<Matrix>& targets) {
  require(!preds.empty(), "compute_metrics_per_feature: empty input");
  const Eigen::Index d = preds[0].cols();
  std::vector<Metrics> out;
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<Matrix> pj, tj;
    pj.reserve(preds.size());
    tj.reserve(targets.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
      pj.push_back(preds[i].col(j));
      tj.push_back(targets[i].col(j));
    }
    out.push_back(compute_metrics(pj, tj));
  }
  return out;
}

namespace {

double validation_loss(const ModelConfig& cfg, const ParameterSet& params,
                       const std::vector<WindowSample>& windows) {
  Rng rng(0);  // unused in eval mode
  ForwardTrace trace;
  double total = 0.0;
  for (const auto& s : windows) {
    const Matrix pred = forward(cfg, params, s.input, rng, false, trace);
    total += mse_loss(pred, s.target).first;
  }
  return total / static_cast<double>(windows.size());
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.below(i)]);
}

}  // namespace

TrainResult train(const ModelConfig& cfg, const TrainConfig& tcfg,
                  const std::vector<WindowSample>& train_windows,
                  const std::vector<WindowSample>& val_windows) {
  cfg.validate();
  tcfg.validate();
  require(!train_windows.empty(), "train: no training windows");
  require(!val_windows.empty(), "train: no validation windows");

  ParameterSet params = init_parameters(cfg, tcfg.seed);
  Vector grads = Vector::Zero(params.total());
  AdamState adam(params.total(), tcfg.learning_rate);
  Rng master(tcfg.seed);
  Rng shuffle_rng = master.split(1);

  std::vector<std::size_t> idx(train_windows.size());
  std::iota(idx.begin(), idx.end(), 0);

  TrainResult result{params, {}, 0};
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  ForwardTrace trace;

  for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
    if (tcfg.shuffle) shuffle_indices(idx, shuffle_rng);
    Rng dropout_rng = master.split(100 + static_cast<std::uint64_t>(epoch));
    const std::size_t n_batches =
        (train_windows.size() + tcfg.batch_size - 1) / static_cast<std::size_t>(tcfg.batch_size);
    const std::size_t batch_cap = tcfg.max_batches_per_epoch > 0
                                      ? std::min<std::size_t>(n_batches, tcfg.max_batches_per_epoch)
                                      : n_batches;
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < batch_cap; ++b) {
      const std::size_t begin = b * static_cast<std::size_t>(tcfg.batch_size);
      const std::size_t end =
          std::min(begin + static_cast<std::size_t>(tcfg.batch_size), train_windows.size());
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      grads.setZero();
      double batch_loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const WindowSample& s = train_windows[idx[i]];
        const Matrix pred = forward(cfg, params, s.input, dropout_rng, true, trace);
        auto [loss, grad_pred] = mse_loss(pred, s.target);
        batch_loss += loss;
        backward(cfg, params, trace, Matrix(inv_batch * grad_pred), grads);
      }
      batch_loss *= inv_batch;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train: non-finite loss in epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(b));
      adam_step(params.values, grads, adam);
      epoch_loss += batch_loss * static_cast<double>(end - begin);
      seen += end - begin;
    }

    EpochStats stats;
    stats.train_loss = epoch_loss / static_cast<double>(seen);
    stats.val_loss = validation_loss(cfg, params, val_windows);
    result.history.push_back(stats);
    result.epochs_run = epoch + 1;

    if (stats.val_loss < best_val) {
      best_val = stats.val_loss;
      result.params = params;
      since_best = 0;
    } else if (++since_best >= tcfg.patience) {
      break;
    }
  }
  return result;
}

EvalReport evaluate(const ModelConfig& cfg, const ParameterSet& params,
                    const std::vector<WindowSample>& eval_windows) {
  require(!eval_windows.empty(), "evaluate: empty window set");
  Rng rng(0);
  ForwardTrace trace;
  std::vector<Matrix> preds, targets;
  preds.reserve(eval_windows.size());
  targets.reserve(eval_windows.size());
  for (const auto& s : eval_windows) {
    preds.push_back(forward(cfg, params, s.input, rng, false, trace));
    targets.push_back(s.target);
  }
  EvalReport r;
  r.model = "relamix";
  r.ablation = ablation_name(cfg.ablation);
  r.k = cfg.horizon;
  r.metrics = compute_metrics(preds, targets);
  r.per_feature = compute_metrics_per_feature(preds, targets);
  r.param_count = count_parameters(cfg);
  r.config_hash = cfg.hash();
  return r;
}

Matrix persistence_predict(const WindowSample& sample, const ModelConfig& cfg) {
  Matrix pred(cfg.horizon, cfg.d_out);
  pred.rowwise() = sample.input.row(sample.input.rows() - 1).head(cfg.d_out);
  return pred;
}

EvalReport evaluate_persistence(const ModelConfig& cfg,
                                const std::vector<WindowSample>& eval_windows) {
  require(!eval_windows.empty(), "evaluate_persistence: empty window set");
  require(cfg.d_out <= cfg.d_in, "persistence baseline needs d_out <= d_in");
  std::vector<Matrix> preds, targets;
  for (const auto& s : eval_windows) {
    preds.push_back(persistence_predict(s, cfg));
    targets.push_back(s.target);
  }
  EvalReport r;
  r.model = "persistence";
  r.ablation = "none";
  r.k = cfg.horizon;
  r.metrics = compute_metrics(preds, targets);
  r.per_feature = compute_metrics_per_feature(preds, targets);
  r.param_count = 0;
  r.config_hash = cfg.hash();
  return r;
}

Matrix LinearBaseline::predict(const WindowSample& sample) const {
  ConstMatrixView flat(sample.input.data(), 1, sample.input.size());
  Matrix out = flat * w;
  out.rowwise() += b.transpose();
  return ConstMatrixView(out.data(), cfg.horizon, cfg.d_out);
}

LinearTrainResult train_linear(const ModelConfig& cfg, const TrainConfig& tcfg,
                               const std::vector<WindowSample>& train_windows,
                               const std::vector<WindowSample>& val_windows) {
  tcfg.validate();
  require(!train_windows.empty() && !val_windows.empty(), "train_linear: empty window set");
  const Eigen::Index in_dim = static_cast<Eigen::Index>(cfg.window_len) * cfg.d_in;
  const Eigen::Index out_dim = static_cast<Eigen::Index>(cfg.horizon) * cfg.d_out;

  LinearBaseline model;
  model.cfg = cfg;
  Rng init_rng(tcfg.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  model.w.resize(in_dim, out_dim);
  for (Eigen::Index i = 0; i < in_dim; ++i)
    for (Eigen::Index j = 0; j < out_dim; ++j) model.w(i, j) = init_rng.uniform(-bound, bound);
  model.b = Vector::Zero(out_dim);

  const Eigen::Index n_params = in_dim * out_dim + out_dim;
  AdamState adam(n_params, tcfg.learning_rate);
  Vector flat_params(n_params), flat_grads(n_params);
  auto pack = [&](const Matrix& w, const Vector& b, Vector& dst) {
    std::copy(w.data(), w.data() + w.size(), dst.data());
    std::copy(b.data(), b.data() + b.size(), dst.data() + w.size());
  };
  auto unpack = [&](const Vector& src, Matrix& w, Vector& b) {
    std::copy(src.data(), src.data() + w.size(), w.data());
    std::copy(src.data() + w.size(), src.data() + src.size(), b.data());
  };

  auto val_loss = [&](const LinearBaseline& m) {
    double total = 0.0;
    for (const auto& s : val_windows) total += mse_loss(m.predict(s), s.target).first;
    return total / static_cast<double>(val_windows.size());
  };

  Rng master(tcfg.seed);
  Rng shuffle_rng = master.split(1);
  std::vector<std::size_t> idx(train_windows.size());
  std::iota(idx.begin(), idx.end(), 0);

  LinearTrainResult result{model, {}, 0};
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
    if (tcfg.shuffle) {
      for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[shuffle_rng.below(i)]);
    }
    const std::size_t n_batches =
        (train_windows.size() + tcfg.batch_size - 1) / static_cast<std::size_t>(tcfg.batch_size);
    const std::size_t batch_cap = tcfg.max_batches_per_epoch > 0
                                      ? std::min<std::size_t>(n_batches, tcfg.max_batches_per_epoch)
                                      : n_batches;
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t bi = 0; bi < batch_cap; ++bi) {
      const std::size_t begin = bi * static_cast<std::size_t>(tcfg.batch_size);
      const std::size_t end =
          std::min(begin + static_cast<std::size_t>(tcfg.batch_size), train_windows.size());
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      Matrix grad_w = Matrix::Zero(in_dim, out_dim);
      Vector grad_b = Vector::Zero(out_dim);
      double batch_loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const WindowSample& s = train_windows[idx[i]];
        const Matrix pred = model.predict(s);
        auto [loss, grad_pred] = mse_loss(pred, s.target);
        batch_loss += loss;
        ConstMatrixView flat_in(s.input.data(), 1, in_dim);
        ConstMatrixView flat_grad(grad_pred.data(), 1, out_dim);
        grad_w += inv_batch * (flat_in.transpose() * flat_grad);
        grad_b += inv_batch * flat_grad.row(0).transpose();
      }
      batch_loss *= inv_batch;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train_linear: non-finite loss in epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(bi));
      pack(model.w, model.b, flat_params);
      pack(grad_w, grad_b, flat_grads);
      adam_step(flat_params, flat_grads, adam);
      unpack(flat_params, model.w, model.b);
      epoch_loss += batch_loss * static_cast<double>(end - begin);
      seen += end - begin;
    }

    EpochStats stats;
    stats.train_loss = epoch_loss / static_cast<double>(seen);
    stats.val_loss = val_loss(model);
    result.history.push_back(stats);
    result.epochs_run = epoch + 1;
    if (stats.val_loss < best_val) {
      best_val = stats.val_loss;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= tcfg.patience) {
      break;
    }
  }
  return result;
}

EvalReport evaluate_linear(const LinearBaseline& model,
                           const std::vector<WindowSample>& eval_windows) {
  require(!eval_windows.empty(), "evaluate_linear: empty window set");
  std::vector<Matrix> preds, targets;
  for (const auto& s : eval_windows) {
    preds.push_back(model.predict(s));
    targets.push_back(s.target);
  }
  EvalReport r;
  r.model = "linear";
  r.ablation = "none";
  r.k = model.cfg.horizon;
  r.metrics = compute_metrics(preds, targets);
  r.per_feature = compute_metrics_per_feature(preds, targets);
  r.param_count = model.param_count();
  r.config_hash = model.cfg.hash();
  return r;
}

namespace {

using nlohmann::json;

json metrics_to_json(const Metrics& m) {
  json j;
  j["mse"] = m.mse;
  j["mae"] = m.mae;
  if (m.r2)
    j["r2"] = *m.r2;
  else
    j["r2"] = nullptr;
  return j;
}

Metrics metrics_from_json(const json& j) {
  Metrics m;
  m.mse = j.at("mse").get<double>();
  m.mae = j.at("mae").get<double>();
  if (!j.at("r2").is_null()) m.r2 = j.at("r2").get<double>();
  return m;
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  json j;
  j["model"] = r.model;
  j["ablation"] = r.ablation;
  j["delay_ratio"] = r.delay_ratio;
  j["k"] = r.k;
  j["mse"] = r.metrics.mse;
  j["mae"] = r.metrics.mae;
  if (r.metrics.r2)
    j["r2"] = *r.metrics.r2;
  else
    j["r2"] = nullptr;
  j["params"] = r.param_count;
  j["epochs"] = r.epochs;
  j["wall_time"] = r.wall_time;
  j["seed"] = r.seed;
  j["mask_hash"] = r.mask_hash;
  j["config_hash"] = r.config_hash;
  json pf = json::array();
  for (const auto& m : r.per_feature) pf.push_back(metrics_to_json(m));
  j["per_feature"] = pf;
  if (!r.error.empty()) j["error"] = r.error;
  return j.dump(2);
}

EvalReport report_from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  EvalReport r;
  r.model = j.at("model").get<std::string>();
  r.ablation = j.at("ablation").get<std::string>();
  r.delay_ratio = j.at("delay_ratio").get<double>();
  r.k = j.at("k").get<int>();
  r.metrics.mse = j.at("mse").get<double>();
  r.metrics.mae = j.at("mae").get<double>();
  if (!j.at("r2").is_null()) r.metrics.r2 = j.at("r2").get<double>();
  r.param_count = j.at("params").get<long>();
  r.epochs = j.at("epochs").get<int>();
  r.wall_time = j.at("wall_time").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.mask_hash = j.at("mask_hash").get<std::uint64_t>();
  r.config_hash = j.at("config_hash").get<std::uint64_t>();
  if (j.contains("per_feature"))
    for (const auto& m : j.at("per_feature")) r.per_feature.push_back(metrics_from_json(m));
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  return r;
}

void sort_reports(std::vector<EvalReport>& reports) {
  std::sort(reports.begin(), reports.end(), [](const EvalReport& a, const EvalReport& b) {
    return std::tie(a.model, a.ablation, a.delay_ratio, a.k, a.seed) <
           std::tie(b.model, b.ablation, b.delay_ratio, b.k, b.seed);
  });
}

GridResult run_grid(const GridConfig& gcfg) {
  TimeSeries clean = gcfg.dataset.kind == "csv"
                         ? load_csv(gcfg.dataset.csv_path)
                         : synth_series(gcfg.dataset.kind, gcfg.dataset.length, gcfg.dataset.seed,
                                        gcfg.dataset.synth);
  GridResult result;

  for (std::uint64_t seed : gcfg.seeds) {
    for (double ratio : gcfg.delay_ratios) {
      // One mask per (ratio, seed), shared across every model and horizon.
      const std::uint64_t mseed =
          seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(ratio * 10000.0) + 1));
      const StagnationMask mask =
          generate_mask(static_cast<std::size_t>(clean.length()), ratio, mseed);
      const std::uint64_t mhash = mask_hash(mask);
      const CorruptedSeries corrupted = apply_zoh(clean.values, mask);

      const SplitSeries splits = chronological_split(clean);
      const Standardizer std_fit = Standardizer::fit(splits.train);
      const Eigen::Index n_train = splits.train.length();
      const Eigen::Index n_val = splits.val.length();
      const Matrix corr_std = std_fit.apply(corrupted.observed);
      const Matrix clean_std = std_fit.apply(clean.values);

      for (int k : gcfg.horizons) {
        ModelConfig mcfg = gcfg.model;
        mcfg.horizon = k;
        TrainConfig tcfg = gcfg.train;
        tcfg.seed = seed;

        auto seg = [&](const Matrix& m, Eigen::Index begin, Eigen::Index len) {
          return Matrix(m.middleRows(begin, len));
        };
        const auto tr_w = make_windows(seg(corr_std, 0, n_train), seg(clean_std, 0, n_train),
                                       mcfg, WindowMode::train);
        const auto va_w = make_windows(seg(corr_std, n_train, n_val),
                                       seg(clean_std, n_train, n_val), mcfg, WindowMode::eval);
        const auto te_w = make_windows(seg(corr_std, n_train + n_val, clean.length() - n_train - n_val),
                                       seg(clean_std, n_train + n_val, clean.length() - n_train - n_val),
                                       mcfg, WindowMode::eval);

        for (const std::string& name : gcfg.models) {
          const auto t0 = std::chrono::steady_clock::now();
          EvalReport r;
          try {
            if (name == "persistence") {
              r = evaluate_persistence(mcfg, te_w);
            } else if (name == "linear") {
              const auto lt = train_linear(mcfg, tcfg, tr_w, va_w);
              r = evaluate_linear(lt.model, te_w);
              r.epochs = lt.epochs_run;
            } else {
              ModelConfig cell = mcfg;
              if (name == "relamix")
                cell.ablation = Ablation::full;
              else
                cell.ablation = ablation_from_name(name);
              const auto tr = train(cell, tcfg, tr_w, va_w);
              r = evaluate(cell, tr.params, te_w);
              r.epochs = tr.epochs_run;
            }
          } catch (const std::exception& e) {
            r.model = name;
            r.error = e.what();
            result.failures.push_back(name + "/ratio=" + std::to_string(ratio) +
                                      "/k=" + std::to_string(k) + "/seed=" + std::to_string(seed) +
                                      ": " + e.what());
          }
          r.delay_ratio = ratio;
          r.k = k;
          r.seed = seed;
          r.mask_hash = mhash;
          r.wall_time =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          result.reports.push_back(std::move(r));
        }
      }
    }
  }
  sort_reports(result.reports);
  return result;
}

}  // namespace relamix
