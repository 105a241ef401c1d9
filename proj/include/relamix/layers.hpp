#pragma once

#include <functional>

#include "relamix/matrix.hpp"
#include "relamix/rng.hpp"

namespace relamix {

// Caches hold exactly the forward values the matching backward needs. A cache
// is valid only for the forward call that produced it; reusing one after the
// parameters have been mutated gives undefined gradients.

struct LinearCache {
  Matrix x;
};

// y = x*w + b broadcast over rows.
Matrix linear_forward(const Matrix& x, const Matrix& w, const Vector& b, LinearCache& cache);

struct LinearGrads {
  Matrix grad_x;
  Matrix grad_w;
  Vector grad_b;
};

LinearGrads linear_backward(const Matrix& grad_y, const Matrix& w, const LinearCache& cache);

struct LayerNormCache {
  Matrix x_hat;       // normalized rows
  Vector inv_sigma;   // 1/sqrt(var + eps) per row
  Vector gamma;
};

// Per-row normalization over the feature axis, population variance.
Matrix layernorm_forward(const Matrix& x, const Vector& gamma, const Vector& beta, double eps,
                         LayerNormCache& cache);

struct LayerNormGrads {
  Matrix grad_x;
  Vector grad_gamma;
  Vector grad_beta;
};

LayerNormGrads layernorm_backward(const Matrix& grad_y, const LayerNormCache& cache);

struct GeluCache {
  Matrix x;
};

// Exact GELU: x * Phi(x), Phi via erf.
Matrix gelu_forward(const Matrix& x, GeluCache& cache);
Matrix gelu_backward(const Matrix& grad_y, const GeluCache& cache);

struct DropoutCache {
  Matrix mask;  // 0 or 1/(1-p); empty when the pass was an identity
};

// Inverted dropout: train mode zeros entries with probability p and scales
// survivors by 1/(1-p); eval mode is a strict identity.
Matrix dropout_forward(const Matrix& x, double p, Rng& rng, bool training, DropoutCache& cache);
Matrix dropout_backward(const Matrix& grad_y, const DropoutCache& cache);

struct AdamState {
  Vector m;
  Vector v;
  long t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(Eigen::Index n, double lr_ = 1e-3)
      : m(Vector::Zero(n)), v(Vector::Zero(n)), lr(lr_) {}
};

// In-place Adam update with bias correction.
void adam_step(Vector& params, const Vector& grads, AdamState& state);

// Central finite differences vs analytic gradient; returns the max over
// coordinates of |a - n| / max(|a|, |n|, 1e-8). f must be pure (dropout off).
double gradient_check(const std::function<double(const Vector&)>& f, const Vector& params,
                      const Vector& analytic_grads, double h = 1e-5);

}  // namespace relamix
