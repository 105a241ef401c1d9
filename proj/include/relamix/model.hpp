#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relamix/layers.hpp"
#include "relamix/matrix.hpp"
#include "relamix/rng.hpp"

namespace relamix {

enum class Ablation { full, no_compression, no_residual };

std::string ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& name);

struct ModelConfig {
  int window_len = 20;   // L
  int horizon = 1;       // k
  int d_in = 5;
  int d_out = 5;
  int d_bottleneck = 32;  // d_b
  int d_model = 64;       // expansion width
  int n_blocks = 2;
  double alpha = 0.1;  // skip scale
  double dropout = 0.1;
  Ablation ablation = Ablation::full;

  // Hidden width actually carried between blocks; the no-compression variant
  // widens the bottleneck to d_model instead of removing the input projection.
  int width() const { return ablation == Ablation::no_compression ? d_model : d_bottleneck; }
  bool residual() const { return ablation != Ablation::no_residual; }

  void validate() const;
  std::uint64_t hash() const;
};

// One flat value vector with named slices; gradients live in a parallel flat
// vector addressed through the same slices.
struct ParamSlice {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index size() const { return rows * cols; }
};

using MatrixView = Eigen::Map<Matrix>;
using ConstMatrixView = Eigen::Map<const Matrix>;

class ParameterSet {
 public:
  explicit ParameterSet(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<ParamSlice>& slices() const { return slices_; }
  Eigen::Index total() const { return values.size(); }

  MatrixView view(const std::string& name) { return view_in(values, name); }
  ConstMatrixView view(const std::string& name) const;
  MatrixView view_in(Vector& flat, const std::string& name) const;

  Vector values;

 private:
  ModelConfig cfg_;
  std::vector<ParamSlice> slices_;
};

// Weights uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero,
// LayerNorm gamma one / beta zero. Deterministic given seed.
ParameterSet init_parameters(const ModelConfig& cfg, std::uint64_t seed);

// Closed-form learnable-element total implied by the config.
long count_parameters(const ModelConfig& cfg);

struct BlockTrace {
  LayerNormCache ln_time;
  LinearCache time_lin;
  GeluCache time_gelu;
  DropoutCache time_drop;
  LayerNormCache ln_feat;
  LinearCache exp_lin;
  GeluCache exp_gelu;
  DropoutCache exp_drop;
  LinearCache comp_lin;
};

struct ForwardTrace {
  LinearCache in_lin;
  GeluCache in_gelu;
  std::vector<Matrix> hidden;  // H^(0)..H^(n_blocks)
  std::vector<BlockTrace> blocks;
  std::vector<LinearCache> skip_caches;  // one per source layer (residual modes)
  LinearCache head_lin;
};

// Full forward pass: bottleneck projection, n_blocks mixing blocks with
// cumulative skip refinement, head reading the last time step. Returns the
// horizon x d_out prediction.
Matrix forward(const ModelConfig& cfg, const ParameterSet& params, const Matrix& window, Rng& rng,
               bool training, ForwardTrace& trace);

// Reverse traversal of the forward graph; accumulates into grads (flat,
// same layout as params.values). The trace must come from a matching forward.
void backward(const ModelConfig& cfg, const ParameterSet& params, const ForwardTrace& trace,
              const Matrix& grad_prediction, Vector& grads);

// Versioned binary container: magic, config hash, named slices, little-endian
// 64-bit floats. Round-trip is bit-exact; load fails on config mismatch.
void save_parameters(const ParameterSet& params, const std::string& path);
ParameterSet load_parameters(const std::string& path, const ModelConfig& cfg);

}  // namespace relamix
