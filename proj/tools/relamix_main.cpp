// relamix command-line front end: delay simulation, training, grid
// experiments, and report merging.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "relamix/data.hpp"
#include "relamix/delay_sim.hpp"
#include "relamix/model.hpp"
#include "relamix/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace relamix;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr const char* kVersion = "relamix 1.0.0";

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

ModelConfig model_from_json(const json& j) {
  ModelConfig cfg;
  cfg.window_len = j.value("window_len", cfg.window_len);
  cfg.horizon = j.value("horizon", cfg.horizon);
  cfg.d_in = j.value("d_in", cfg.d_in);
  cfg.d_out = j.value("d_out", cfg.d_out);
  cfg.d_bottleneck = j.value("d_bottleneck", cfg.d_bottleneck);
  cfg.d_model = j.value("d_model", cfg.d_model);
  cfg.n_blocks = j.value("n_blocks", cfg.n_blocks);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.ablation = ablation_from_name(j.value("ablation", std::string("full")));
  cfg.validate();
  return cfg;
}

json model_to_json(const ModelConfig& cfg) {
  return json{{"window_len", cfg.window_len}, {"horizon", cfg.horizon},
              {"d_in", cfg.d_in},             {"d_out", cfg.d_out},
              {"d_bottleneck", cfg.d_bottleneck}, {"d_model", cfg.d_model},
              {"n_blocks", cfg.n_blocks},     {"alpha", cfg.alpha},
              {"dropout", cfg.dropout},       {"ablation", ablation_name(cfg.ablation)}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.shuffle = j.value("shuffle", cfg.shuffle);
  cfg.max_batches_per_epoch = j.value("max_batches_per_epoch", cfg.max_batches_per_epoch);
  cfg.validate();
  return cfg;
}

json train_to_json(const TrainConfig& cfg) {
  return json{{"learning_rate", cfg.learning_rate},
              {"batch_size", cfg.batch_size},
              {"max_epochs", cfg.max_epochs},
              {"patience", cfg.patience},
              {"seed", cfg.seed},
              {"shuffle", cfg.shuffle},
              {"max_batches_per_epoch", cfg.max_batches_per_epoch}};
}

DatasetSpec dataset_from_json(const json& j) {
  DatasetSpec spec;
  spec.kind = j.value("kind", spec.kind);
  spec.csv_path = j.value("csv_path", spec.csv_path);
  spec.length = j.value("length", spec.length);
  spec.seed = j.value("seed", spec.seed);
  spec.synth.noise_scale = j.value("noise_scale", spec.synth.noise_scale);
  spec.synth.gbm_drift = j.value("gbm_drift", spec.synth.gbm_drift);
  spec.synth.gbm_vol = j.value("gbm_vol", spec.synth.gbm_vol);
  spec.synth.wick_scale = j.value("wick_scale", spec.synth.wick_scale);
  spec.synth.volume_persistence = j.value("volume_persistence", spec.synth.volume_persistence);
  spec.synth.volume_noise = j.value("volume_noise", spec.synth.volume_noise);
  return spec;
}

json dataset_to_json(const DatasetSpec& spec) {
  return json{{"kind", spec.kind},   {"csv_path", spec.csv_path},
              {"length", spec.length}, {"seed", spec.seed},
              {"noise_scale", spec.synth.noise_scale}, {"gbm_drift", spec.synth.gbm_drift},
              {"gbm_vol", spec.synth.gbm_vol}, {"wick_scale", spec.synth.wick_scale},
              {"volume_persistence", spec.synth.volume_persistence},
              {"volume_noise", spec.synth.volume_noise}};
}

GridConfig grid_from_json(const json& root) {
  GridConfig g;
  if (root.contains("model")) g.model = model_from_json(root.at("model"));
  if (root.contains("train")) g.train = train_from_json(root.at("train"));
  if (root.contains("data")) g.dataset = dataset_from_json(root.at("data"));
  if (root.contains("grid")) {
    const json& jg = root.at("grid");
    if (jg.contains("delay_ratios")) g.delay_ratios = jg.at("delay_ratios").get<std::vector<double>>();
    if (jg.contains("horizons")) g.horizons = jg.at("horizons").get<std::vector<int>>();
    if (jg.contains("models")) g.models = jg.at("models").get<std::vector<std::string>>();
    if (jg.contains("seeds")) g.seeds = jg.at("seeds").get<std::vector<std::uint64_t>>();
  }
  return g;
}

json grid_to_json(const GridConfig& g) {
  json root;
  root["model"] = model_to_json(g.model);
  root["train"] = train_to_json(g.train);
  root["data"] = dataset_to_json(g.dataset);
  root["grid"] = json{{"delay_ratios", g.delay_ratios},
                      {"horizons", g.horizons},
                      {"models", g.models},
                      {"seeds", g.seeds}};
  return root;
}

json manifest_json(const json& resolved_config, std::uint64_t master_seed,
                   const std::string& input_path, const std::string& out_dir) {
  json m;
  m["tool_version"] = kVersion;
  m["master_seed"] = master_seed;
  m["config"] = resolved_config;
  m["output_dir"] = out_dir;
  if (!input_path.empty()) m["input_hash"] = fnv1a(read_file(input_path));
  return m;
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(5) << v;
  return ss.str();
}

std::string render_table(const std::vector<EvalReport>& reports) {
  std::vector<double> ratios;
  std::vector<int> ks;
  std::vector<std::pair<std::string, std::string>> models;  // (model, ablation)
  for (const auto& r : reports) {
    if (std::find(ratios.begin(), ratios.end(), r.delay_ratio) == ratios.end())
      ratios.push_back(r.delay_ratio);
    if (std::find(ks.begin(), ks.end(), r.k) == ks.end()) ks.push_back(r.k);
    const auto key = std::make_pair(r.model, r.ablation);
    if (std::find(models.begin(), models.end(), key) == models.end()) models.push_back(key);
  }
  std::sort(ratios.begin(), ratios.end());
  std::sort(ks.begin(), ks.end());

  auto cell = [&](const std::string& model, const std::string& ablation, double ratio, int k,
                  const std::string& metric) -> std::string {
    for (const auto& r : reports) {
      if (r.model != model || r.ablation != ablation || r.delay_ratio != ratio || r.k != k)
        continue;
      if (!r.error.empty()) return "FAIL";
      if (metric == "MSE") return format_double(r.metrics.mse);
      if (metric == "MAE") return format_double(r.metrics.mae);
      if (metric == "R2") return r.metrics.r2 ? format_double(*r.metrics.r2) : "n/a";
      if (metric == "Params") return std::to_string(r.param_count);
    }
    return "-";
  };

  const int name_w = 28, col_w = 12;
  std::ostringstream out;
  out << std::left << std::setw(name_w) << "Model / Metric";
  for (double ratio : ratios)
    for (int k : ks) {
      std::ostringstream head;
      head << "d" << static_cast<int>(ratio * 100 + 0.5) << "% k=" << k;
      out << std::right << std::setw(col_w) << head.str();
    }
  out << '\n' << std::string(name_w + col_w * ratios.size() * ks.size(), '-') << '\n';
  for (const auto& [model, ablation] : models) {
    const std::string label = ablation == "none" || ablation == "full"
                                  ? model + (ablation == "full" ? "" : "")
                                  : model + " (" + ablation + ")";
    for (const std::string metric : {"MSE", "MAE", "R2", "Params"}) {
      out << std::left << std::setw(name_w) << (label + " " + metric);
      for (double ratio : ratios)
        for (int k : ks)
          out << std::right << std::setw(col_w) << cell(model, ablation, ratio, k, metric);
      out << '\n';
    }
  }
  return out.str();
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < history.size(); ++i)
    out << i << ',' << history[i].train_loss << ',' << history[i].val_loss << '\n';
  return out.str();
}

std::string reports_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "model,ablation,delay_ratio,k,mse,mae,r2,params,epochs,seed,mask_hash,config_hash\n"
      << std::setprecision(17);
  for (const auto& r : reports) {
    out << r.model << ',' << r.ablation << ',' << r.delay_ratio << ',' << r.k << ','
        << r.metrics.mse << ',' << r.metrics.mae << ','
        << (r.metrics.r2 ? std::to_string(*r.metrics.r2) : "") << ',' << r.param_count << ','
        << r.epochs << ',' << r.seed << ',' << r.mask_hash << ',' << r.config_hash << '\n';
  }
  return out.str();
}

TimeSeries resolve_series(const DatasetSpec& spec) {
  if (spec.kind == "csv") return load_csv(spec.csv_path);
  return synth_series(spec.kind, spec.length, spec.seed, spec.synth);
}

int cmd_simulate(const std::string& input, const std::string& synth_kind, std::size_t length,
                 double ratio, std::uint64_t seed, const std::string& out_dir) {
  TimeSeries clean;
  std::string input_path;
  if (!input.empty()) {
    clean = load_csv(input);
    input_path = input;
  } else {
    clean = synth_series(synth_kind, length, seed);
  }
  fs::create_directories(out_dir);
  const auto mask = generate_mask(static_cast<std::size_t>(clean.length()), ratio, seed);
  const auto corrupted = apply_zoh(clean.values, mask);
  TimeSeries observed = clean;
  observed.values = corrupted.observed;
  save_csv(observed, (fs::path(out_dir) / "corrupted.csv").string());
  save_mask_csv(mask, (fs::path(out_dir) / "mask.csv").string());
  const auto stats = staleness_stats(mask);
  json js;
  js["stagnation_fraction"] = stats.stagnation_fraction;
  js["max_run"] = stats.max_run;
  json hist = json::object();
  for (const auto& [len, count] : stats.run_histogram) hist[std::to_string(len)] = count;
  js["run_histogram"] = hist;
  js["mask_hash"] = mask_hash(mask);
  js["delay_ratio"] = ratio;
  js["seed"] = seed;
  write_file((fs::path(out_dir) / "staleness_stats.json").string(), js.dump(2) + "\n");
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& data_csv,
              const std::string& synth_kind, const std::string& out_dir, double delay_ratio) {
  json root = config_path.empty() ? json::object() : json::parse(read_file(config_path));
  ModelConfig mcfg = root.contains("model") ? model_from_json(root.at("model")) : ModelConfig{};
  TrainConfig tcfg = root.contains("train") ? train_from_json(root.at("train")) : TrainConfig{};
  DatasetSpec dspec =
      root.contains("data") ? dataset_from_json(root.at("data")) : DatasetSpec{};
  if (!data_csv.empty()) {
    dspec.kind = "csv";
    dspec.csv_path = data_csv;
  } else if (!synth_kind.empty()) {
    dspec.kind = synth_kind;
  }
  if (delay_ratio >= 0.0) root["data"]["delay_ratio"] = delay_ratio;
  const double ratio = root.contains("data") ? root["data"].value("delay_ratio", 0.25) : 0.25;

  fs::create_directories(out_dir);
  json resolved;
  resolved["model"] = model_to_json(mcfg);
  resolved["train"] = train_to_json(tcfg);
  resolved["data"] = dataset_to_json(dspec);
  resolved["data"]["delay_ratio"] = ratio;
  write_file((fs::path(out_dir) / "manifest.json").string(),
             manifest_json(resolved, tcfg.seed, dspec.kind == "csv" ? dspec.csv_path : "", out_dir)
                     .dump(2) +
                 "\n");

  const TimeSeries clean = resolve_series(dspec);
  const auto mask = generate_mask(static_cast<std::size_t>(clean.length()), ratio, tcfg.seed);
  const auto corrupted = apply_zoh(clean.values, mask);
  const auto splits = chronological_split(clean);
  const auto std_fit = Standardizer::fit(splits.train);
  const Matrix corr = std_fit.apply(corrupted.observed);
  const Matrix cln = std_fit.apply(clean.values);
  const Eigen::Index n_tr = splits.train.length(), n_va = splits.val.length();
  const auto tr_w = make_windows(corr.topRows(n_tr), cln.topRows(n_tr), mcfg, WindowMode::train);
  const auto va_w = make_windows(corr.middleRows(n_tr, n_va), cln.middleRows(n_tr, n_va), mcfg,
                                 WindowMode::eval);

  const auto result = train(mcfg, tcfg, tr_w, va_w);
  save_parameters(result.params, (fs::path(out_dir) / "params.bin").string());
  write_file((fs::path(out_dir) / "history.csv").string(), history_csv(result.history));

  EvalReport report = evaluate(mcfg, result.params, va_w);
  report.delay_ratio = ratio;
  report.seed = tcfg.seed;
  report.mask_hash = mask_hash(mask);
  report.epochs = result.epochs_run;
  write_file((fs::path(out_dir) / "report.json").string(), report_to_json(report) + "\n");
  return kExitOk;
}

int cmd_grid(const std::string& config_path, const std::string& out_dir,
             const std::vector<std::string>& model_filter) {
  GridConfig g =
      config_path.empty() ? GridConfig{} : grid_from_json(json::parse(read_file(config_path)));
  if (!model_filter.empty()) g.models = model_filter;
  fs::create_directories(out_dir);
  write_file((fs::path(out_dir) / "manifest.json").string(),
             manifest_json(grid_to_json(g), g.seeds.empty() ? 0 : g.seeds.front(),
                           g.dataset.kind == "csv" ? g.dataset.csv_path : "", out_dir)
                     .dump(2) +
                 "\n");

  const GridResult result = run_grid(g);

  json arr = json::array();
  for (const auto& r : result.reports) {
    arr.push_back(json::parse(report_to_json(r)));
    std::ostringstream name;
    name << "cell_" << r.model << '_' << r.ablation << "_r" << static_cast<int>(r.delay_ratio * 100 + 0.5)
         << "_k" << r.k << "_s" << r.seed << ".json";
    write_file((fs::path(out_dir) / name.str()).string(), report_to_json(r) + "\n");
  }
  write_file((fs::path(out_dir) / "reports.json").string(), arr.dump(2) + "\n");
  const std::string table = render_table(result.reports);
  write_file((fs::path(out_dir) / "table.txt").string(), table);
  std::cout << table;

  if (!result.failures.empty()) {
    std::cerr << result.failures.size() << " grid cell(s) failed:\n";
    for (const auto& f : result.failures) std::cerr << "  " << f << '\n';
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_report(const std::string& in_dir, const std::string& format) {
  if (!fs::is_directory(in_dir)) throw IoError("not a directory: " + in_dir);
  std::vector<EvalReport> reports;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(in_dir))
    if (entry.path().extension() == ".json" && entry.path().filename().string().rfind("cell_", 0) == 0)
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) reports.push_back(report_from_json(read_file(f.string())));
  sort_reports(reports);

  if (format == "json") {
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(json::parse(report_to_json(r)));
    std::cout << arr.dump(2) << '\n';
  } else if (format == "csv") {
    std::cout << reports_csv(reports);
  } else {
    std::cout << render_table(reports);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ReLaMix delay-robust forecasting pipeline"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Apply zero-order-hold corruption to a series");
  std::string sim_input, sim_synth = "gbm_ohlcv", sim_out = "sim_out";
  std::size_t sim_length = 100000;
  double sim_ratio = -1.0;
  std::uint64_t sim_seed = 1;
  sim->add_option("--input", sim_input, "Input OHLCV CSV");
  sim->add_option("--synth", sim_synth, "Synthetic kind (sine_mixture|gbm_ohlcv)");
  sim->add_option("--length", sim_length, "Synthetic series length");
  sim->add_option("--ratio", sim_ratio, "Target stagnation fraction in [0,1)")->required();
  sim->add_option("--seed", sim_seed, "Mask seed");
  sim->add_option("--out", sim_out, "Output directory");

  auto* trn = app.add_subcommand("train", "Train one model and report validation metrics");
  std::string trn_config, trn_data, trn_synth, trn_out = "train_out";
  double trn_ratio = -1.0;
  trn->add_option("--config", trn_config, "JSON config file");
  trn->add_option("--data", trn_data, "OHLCV CSV (overrides config data source)");
  trn->add_option("--synth", trn_synth, "Synthetic kind (overrides config data source)");
  trn->add_option("--ratio", trn_ratio, "Delay ratio override");
  trn->add_option("--out", trn_out, "Output directory");

  auto* grd = app.add_subcommand("grid", "Run the full (model x ratio x horizon x seed) grid");
  std::string grd_config, grd_out = "grid_out";
  std::vector<std::string> grd_models;
  grd->add_option("--config", grd_config, "JSON config file");
  grd->add_option("--models", grd_models, "Model subset (overrides config)");
  grd->add_option("--out", grd_out, "Output directory");

  auto* rep = app.add_subcommand("report", "Merge and render per-cell reports");
  std::string rep_in, rep_format = "json";
  rep->add_option("--in", rep_in, "Directory with cell_*.json reports")->required();
  rep->add_option("--format", rep_format, "json|csv|table")
      ->check(CLI::IsMember({"json", "csv", "table"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_input, sim_synth, sim_length, sim_ratio, sim_seed, sim_out);
    if (trn->parsed()) return cmd_train(trn_config, trn_data, trn_synth, trn_out, trn_ratio);
    if (grd->parsed()) return cmd_grid(grd_config, grd_out, grd_models);
    if (rep->parsed()) return cmd_report(rep_in, rep_format);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const json::exception& e) {
    std::cerr << "error: bad config: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    const std::string msg = e.what();
    if (msg.find("cannot open") != std::string::npos ||
        msg.find("cannot read") != std::string::npos ||
        msg.find("write failed") != std::string::npos)
      return kExitIo;
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitUsage;
}
