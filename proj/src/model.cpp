#include "relamix/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace relamix {

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_compression: return "no_compression";
    case Ablation::no_residual: return "no_residual";
  }
  return "full";
}

Ablation ablation_from_name(const std::string& name) {
  if (name == "full") return Ablation::full;
  if (name == "no_compression") return Ablation::no_compression;
  if (name == "no_residual") return Ablation::no_residual;
  throw std::invalid_argument("unknown ablation: " + name);
}

void ModelConfig::validate() const {
  require(window_len >= 1, "config: window_len must be >= 1");
  require(horizon >= 1, "config: horizon must be >= 1");
  require(n_blocks >= 1, "config: n_blocks must be >= 1");
  require(d_in >= 1 && d_out >= 1, "config: d_in/d_out must be >= 1");
  require(d_bottleneck >= 1 && d_model >= 1, "config: widths must be >= 1");
  require(d_bottleneck <= d_model, "config: d_bottleneck must not exceed d_model");
  require(alpha >= 0.0, "config: alpha must be >= 0");
  require(dropout >= 0.0 && dropout < 1.0, "config: dropout must be in [0, 1)");
}

std::uint64_t ModelConfig::hash() const {
  const std::string repr =
      std::to_string(window_len) + "|" + std::to_string(horizon) + "|" + std::to_string(d_in) +
      "|" + std::to_string(d_out) + "|" + std::to_string(d_bottleneck) + "|" +
      std::to_string(d_model) + "|" + std::to_string(n_blocks) + "|" + std::to_string(alpha) +
      "|" + std::to_string(dropout) + "|" + ablation_name(ablation);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : repr) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

ParameterSet::ParameterSet(const ModelConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const Eigen::Index w = cfg.width();
  const Eigen::Index L = cfg.window_len;
  auto add = [this](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    const Eigen::Index offset = slices_.empty() ? 0 : slices_.back().offset + slices_.back().size();
    slices_.push_back({name, offset, rows, cols});
  };
  add("in.w", cfg.d_in, w);
  add("in.b", 1, w);
  for (int l = 0; l < cfg.n_blocks; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    add(p + "time.ln.gamma", 1, w);
    add(p + "time.ln.beta", 1, w);
    add(p + "time.w", L, L);
    add(p + "time.b", 1, L);
    add(p + "feat.ln.gamma", 1, w);
    add(p + "feat.ln.beta", 1, w);
    add(p + "feat.w_exp", w, cfg.d_model);
    add(p + "feat.b_exp", 1, cfg.d_model);
    add(p + "feat.w_comp", cfg.d_model, w);
    add(p + "feat.b_comp", 1, w);
  }
  if (cfg.residual()) {
    for (int j = 0; j < cfg.n_blocks; ++j) {
      add("skip" + std::to_string(j) + ".w", w, w);
      add("skip" + std::to_string(j) + ".b", 1, w);
    }
  }
  add("head.w", w, static_cast<Eigen::Index>(cfg.horizon) * cfg.d_out);
  add("head.b", 1, static_cast<Eigen::Index>(cfg.horizon) * cfg.d_out);
  values = Vector::Zero(slices_.back().offset + slices_.back().size());
}

MatrixView ParameterSet::view_in(Vector& flat, const std::string& name) const {
  require(flat.size() == values.size(), "view_in: flat vector length mismatch");
  for (const auto& s : slices_)
    if (s.name == name) return MatrixView(flat.data() + s.offset, s.rows, s.cols);
  throw std::invalid_argument("no parameter slice named " + name);
}

ConstMatrixView ParameterSet::view(const std::string& name) const {
  for (const auto& s : slices_)
    if (s.name == name) return ConstMatrixView(values.data() + s.offset, s.rows, s.cols);
  throw std::invalid_argument("no parameter slice named " + name);
}

ParameterSet init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  ParameterSet params(cfg);
  Rng rng(seed);
  for (const auto& s : params.slices()) {
    MatrixView m = params.view_in(params.values, s.name);
    const std::string leaf = s.name.substr(s.name.rfind('.') + 1);
    const bool is_gamma = leaf == "gamma";
    const bool is_bias = !leaf.empty() && leaf[0] == 'b';  // b, b_exp, b_comp, beta
    if (is_gamma) {
      m.setOnes();
    } else if (is_bias) {
      m.setZero();
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(s.rows));
      for (Eigen::Index i = 0; i < s.rows; ++i)
        for (Eigen::Index j = 0; j < s.cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    }
  }
  return params;
}

long count_parameters(const ModelConfig& cfg) {
  cfg.validate();
  const long w = cfg.width();
  const long L = cfg.window_len;
  const long dm = cfg.d_model;
  long total = cfg.d_in * w + w;                          // input projection
  long per_block = 4 * w                                  // two LayerNorms
                   + L * L + L                            // time mixing
                   + w * dm + dm + dm * w + w;            // expand-compress
  total += cfg.n_blocks * per_block;
  if (cfg.residual()) total += cfg.n_blocks * (w * w + w);  // one g_j per source layer
  total += w * cfg.horizon * cfg.d_out + cfg.horizon * cfg.d_out;  // head
  return total;
}

namespace {

Vector row_vec(ConstMatrixView v) { return v.row(0).transpose(); }

}  // namespace

Matrix forward(const ModelConfig& cfg, const ParameterSet& params, const Matrix& window, Rng& rng,
               bool training, ForwardTrace& trace) {
  require(window.rows() == cfg.window_len && window.cols() == cfg.d_in,
          "forward: window " + shape_str(window) + " does not match config " +
              std::to_string(cfg.window_len) + "x" + std::to_string(cfg.d_in));
  require(window.allFinite(), "forward: non-finite input window");
  const double eps = 1e-5;
  const bool res = cfg.residual();

  trace.hidden.clear();
  trace.blocks.assign(static_cast<std::size_t>(cfg.n_blocks), BlockTrace{});
  trace.skip_caches.assign(res ? static_cast<std::size_t>(cfg.n_blocks) : 0, LinearCache{});

  Matrix h = linear_forward(window, params.view("in.w"), row_vec(params.view("in.b")),
                            trace.in_lin);
  h = gelu_forward(h, trace.in_gelu);
  trace.hidden.push_back(h);

  // g_j(H^(j)) is the same value for every later destination; compute once.
  std::vector<Matrix> skip_terms;
  auto record_source = [&](int j, const Matrix& hj) {
    if (!res || j >= cfg.n_blocks) return;
    const std::string p = "skip" + std::to_string(j) + ".";
    skip_terms.push_back(linear_forward(hj, params.view(p + "w"), row_vec(params.view(p + "b")),
                                        trace.skip_caches[static_cast<std::size_t>(j)]));
  };
  record_source(0, h);

  for (int l = 0; l < cfg.n_blocks; ++l) {
    BlockTrace& bt = trace.blocks[static_cast<std::size_t>(l)];
    const std::string p = "block" + std::to_string(l) + ".";

    Matrix hn = layernorm_forward(h, row_vec(params.view(p + "time.ln.gamma")),
                                  row_vec(params.view(p + "time.ln.beta")), eps, bt.ln_time);
    Matrix u = linear_forward(hn.transpose(), params.view(p + "time.w"),
                              row_vec(params.view(p + "time.b")), bt.time_lin);
    u = gelu_forward(u, bt.time_gelu);
    u = dropout_forward(u, cfg.dropout, rng, training, bt.time_drop);
    Matrix h_time = res ? Matrix(h + u.transpose()) : Matrix(u.transpose());

    Matrix hn2 = layernorm_forward(h_time, row_vec(params.view(p + "feat.ln.gamma")),
                                   row_vec(params.view(p + "feat.ln.beta")), eps, bt.ln_feat);
    Matrix e = linear_forward(hn2, params.view(p + "feat.w_exp"),
                              row_vec(params.view(p + "feat.b_exp")), bt.exp_lin);
    e = gelu_forward(e, bt.exp_gelu);
    e = dropout_forward(e, cfg.dropout, rng, training, bt.exp_drop);
    Matrix c = linear_forward(e, params.view(p + "feat.w_comp"),
                              row_vec(params.view(p + "feat.b_comp")), bt.comp_lin);
    Matrix out = res ? Matrix(h_time + c) : c;

    if (res) {
      // Cumulative skip over all earlier hidden states, including H^(0).
      for (int j = 0; j <= l; ++j) out += cfg.alpha * skip_terms[static_cast<std::size_t>(j)];
    }
    h = out;
    trace.hidden.push_back(h);
    record_source(l + 1, h);
  }

  const Matrix last = h.row(cfg.window_len - 1);
  Matrix flat = linear_forward(last, params.view("head.w"), row_vec(params.view("head.b")),
                               trace.head_lin);
  return ConstMatrixView(flat.data(), cfg.horizon, cfg.d_out);
}

namespace {

void add_grad(const ParameterSet& params, Vector& grads, const std::string& name,
              const Matrix& g) {
  params.view_in(grads, name) += g;
}

void add_grad(const ParameterSet& params, Vector& grads, const std::string& name,
              const Vector& g) {
  params.view_in(grads, name) += g.transpose();
}

}  // namespace

void backward(const ModelConfig& cfg, const ParameterSet& params, const ForwardTrace& trace,
              const Matrix& grad_prediction, Vector& grads) {
  require(grad_prediction.rows() == cfg.horizon && grad_prediction.cols() == cfg.d_out,
          "backward: grad_prediction " + shape_str(grad_prediction) + " does not match head");
  require(trace.hidden.size() == static_cast<std::size_t>(cfg.n_blocks) + 1,
          "backward: trace does not match config");
  require(grads.size() == params.total(), "backward: gradient vector length mismatch");
  const bool res = cfg.residual();
  const int n = cfg.n_blocks;

  // Head.
  Matrix grad_flat(1, static_cast<Eigen::Index>(cfg.horizon) * cfg.d_out);
  for (Eigen::Index i = 0; i < grad_prediction.rows(); ++i)
    for (Eigen::Index j = 0; j < grad_prediction.cols(); ++j)
      grad_flat(0, i * grad_prediction.cols() + j) = grad_prediction(i, j);
  LinearGrads hg = linear_backward(grad_flat, params.view("head.w"), trace.head_lin);
  add_grad(params, grads, "head.w", hg.grad_w);
  add_grad(params, grads, "head.b", hg.grad_b);

  // Gradient buffers per hidden state and per skip term.
  std::vector<Matrix> dH(static_cast<std::size_t>(n) + 1,
                         Matrix::Zero(cfg.window_len, cfg.width()));
  dH[static_cast<std::size_t>(n)].row(cfg.window_len - 1) = hg.grad_x;
  std::vector<Matrix> dG;
  if (res)
    dG.assign(static_cast<std::size_t>(n), Matrix::Zero(cfg.window_len, cfg.width()));

  for (int l = n; l >= 1; --l) {
    Matrix& dh = dH[static_cast<std::size_t>(l)];
    if (res && l < n) {
      // H^(l) is a skip source for every later layer; those uses are all
      // processed by now, so fold the g_l path in before consuming dh.
      const std::string p = "skip" + std::to_string(l) + ".";
      LinearGrads sg = linear_backward(dG[static_cast<std::size_t>(l)], params.view(p + "w"),
                                       trace.skip_caches[static_cast<std::size_t>(l)]);
      add_grad(params, grads, p + "w", sg.grad_w);
      add_grad(params, grads, p + "b", sg.grad_b);
      dh += sg.grad_x;
    }
    if (res) {
      for (int j = 0; j < l; ++j) dG[static_cast<std::size_t>(j)] += cfg.alpha * dh;
    }

    const BlockTrace& bt = trace.blocks[static_cast<std::size_t>(l - 1)];
    const std::string p = "block" + std::to_string(l - 1) + ".";

    // Feature mixing: out = h_time + c (residual) or c.
    LinearGrads cg = linear_backward(dh, params.view(p + "feat.w_comp"), bt.comp_lin);
    add_grad(params, grads, p + "feat.w_comp", cg.grad_w);
    add_grad(params, grads, p + "feat.b_comp", cg.grad_b);
    Matrix de = dropout_backward(cg.grad_x, bt.exp_drop);
    de = gelu_backward(de, bt.exp_gelu);
    LinearGrads eg = linear_backward(de, params.view(p + "feat.w_exp"), bt.exp_lin);
    add_grad(params, grads, p + "feat.w_exp", eg.grad_w);
    add_grad(params, grads, p + "feat.b_exp", eg.grad_b);
    LayerNormGrads ln2 = layernorm_backward(eg.grad_x, bt.ln_feat);
    add_grad(params, grads, p + "feat.ln.gamma", ln2.grad_gamma);
    add_grad(params, grads, p + "feat.ln.beta", ln2.grad_beta);
    Matrix dh_time = ln2.grad_x;
    if (res) dh_time += dh;

    // Time mixing: h_time = h + u^T (residual) or u^T.
    Matrix da = dh_time.transpose();
    da = dropout_backward(da, bt.time_drop);
    da = gelu_backward(da, bt.time_gelu);
    LinearGrads tg = linear_backward(da, params.view(p + "time.w"), bt.time_lin);
    add_grad(params, grads, p + "time.w", tg.grad_w);
    add_grad(params, grads, p + "time.b", tg.grad_b);
    LayerNormGrads ln1 = layernorm_backward(Matrix(tg.grad_x.transpose()), bt.ln_time);
    add_grad(params, grads, p + "time.ln.gamma", ln1.grad_gamma);
    add_grad(params, grads, p + "time.ln.beta", ln1.grad_beta);
    dH[static_cast<std::size_t>(l - 1)] += ln1.grad_x;
    if (res) dH[static_cast<std::size_t>(l - 1)] += dh_time;
  }

  Matrix dh0 = dH[0];
  if (res) {
    LinearGrads sg = linear_backward(dG[0], params.view("skip0.w"), trace.skip_caches[0]);
    add_grad(params, grads, "skip0.w", sg.grad_w);
    add_grad(params, grads, "skip0.b", sg.grad_b);
    dh0 += sg.grad_x;
  }
  Matrix din = gelu_backward(dh0, trace.in_gelu);
  LinearGrads ig = linear_backward(din, params.view("in.w"), trace.in_lin);
  add_grad(params, grads, "in.w", ig.grad_w);
  add_grad(params, grads, "in.b", ig.grad_b);
}

namespace {

constexpr char kMagic[8] = {'R', 'L', 'M', 'X', 'P', 'A', 'R', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("parameter file truncated");
  return v;
}

}  // namespace

void save_parameters(const ParameterSet& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_parameters: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, params.config().hash());
  write_pod(out, static_cast<std::uint32_t>(params.slices().size()));
  for (const auto& s : params.slices()) {
    write_pod(out, static_cast<std::uint32_t>(s.name.size()));
    out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    write_pod(out, static_cast<std::uint64_t>(s.rows));
    write_pod(out, static_cast<std::uint64_t>(s.cols));
  }
  out.write(reinterpret_cast<const char*>(params.values.data()),
            static_cast<std::streamsize>(params.values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_parameters: write failed for " + path);
}

ParameterSet load_parameters(const std::string& path, const ModelConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_parameters: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw std::runtime_error("load_parameters: bad magic in " + path);
  const auto file_hash = read_pod<std::uint64_t>(in);
  if (file_hash != cfg.hash())
    throw std::runtime_error("load_parameters: config hash mismatch for " + path);
  ParameterSet params(cfg);
  const auto n_slices = read_pod<std::uint32_t>(in);
  if (n_slices != params.slices().size())
    throw std::runtime_error("load_parameters: slice count mismatch");
  for (const auto& s : params.slices()) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = read_pod<std::uint64_t>(in);
    const auto cols = read_pod<std::uint64_t>(in);
    if (!in || name != s.name || rows != static_cast<std::uint64_t>(s.rows) ||
        cols != static_cast<std::uint64_t>(s.cols))
      throw std::runtime_error("load_parameters: slice layout mismatch at " + s.name);
  }
  in.read(reinterpret_cast<char*>(params.values.data()),
          static_cast<std::streamsize>(params.values.size() * sizeof(double)));
  if (!in) throw std::runtime_error("load_parameters: data truncated in " + path);
  return params;
}

}  // namespace relamix
