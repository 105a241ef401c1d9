#include <doctest.h>

#include <cmath>

#include "relamix/layers.hpp"
#include "relamix/rng.hpp"

using namespace relamix;

namespace {

// Naive triple-loop reference, the independent oracle for matmul.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index p = 0; p < a.cols(); ++p) c(i, j) += a(i, p) * b(p, j);
  return c;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

Vector random_vector(Eigen::Index n, Rng& rng) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("matmul identity and projector") {
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  CHECK(matmul(Matrix::Identity(2, 2), a) == a);

  Matrix p(2, 2), b(2, 2), expected(2, 2);
  p << 1, 0, 0, 0;
  b << 5, 6, 7, 8;
  expected << 5, 6, 0, 0;
  CHECK(matmul(p, b) == expected);
}

TEST_CASE("matmul bit-identical to triple-loop oracle") {
  Rng rng(42);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix a = random_matrix(3, 4, rng);
    const Matrix b = random_matrix(4, 2, rng);
    CHECK(matmul(a, b) == naive_matmul(a, b));
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  CHECK_THROWS_WITH_AS(matmul(Matrix::Zero(2, 3), Matrix::Zero(2, 2)),
                       doctest::Contains("2x3"), DimensionError);
}

TEST_CASE("linear_forward zero input and identity weight") {
  Rng rng(1);
  LinearCache cache;
  const Matrix w = random_matrix(3, 4, rng);
  const Vector b = random_vector(4, rng);
  const Matrix y = linear_forward(Matrix::Zero(5, 3), w, b, cache);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(y.row(i).transpose() == b);

  const Matrix x = random_matrix(4, 3, rng);
  CHECK(linear_forward(x, Matrix::Identity(3, 3), Vector::Zero(3), cache) == x);
}

TEST_CASE("linear_backward scalar chain rule") {
  Matrix x(1, 1), w(1, 1), gy(1, 1);
  x << 2;
  w << 3;
  gy << 1;
  LinearCache cache;
  linear_forward(x, w, Vector::Zero(1), cache);
  const auto g = linear_backward(gy, w, cache);
  CHECK(g.grad_x(0, 0) == 3.0);
  CHECK(g.grad_w(0, 0) == 2.0);
  CHECK(g.grad_b(0) == 1.0);
}

TEST_CASE("linear_backward zero upstream gives zero grads") {
  Rng rng(2);
  LinearCache cache;
  const Matrix x = random_matrix(3, 5, rng);
  const Matrix w = random_matrix(5, 2, rng);
  linear_forward(x, w, Vector::Zero(2), cache);
  const auto g = linear_backward(Matrix::Zero(3, 2), w, cache);
  CHECK(g.grad_x.isZero(0));
  CHECK(g.grad_w.isZero(0));
  CHECK(g.grad_b.isZero(0));
}

TEST_CASE("linear gradients match finite differences") {
  Rng rng(3);
  const Matrix x = random_matrix(4, 6, rng);
  const Matrix w0 = random_matrix(6, 3, rng);
  const Vector b0 = random_vector(3, rng);
  const Matrix gy = random_matrix(4, 3, rng);

  // Scalar objective: sum(grad_y .* y), so d/dtheta is the chained gradient.
  auto loss = [&](const Matrix& w, const Vector& b) {
    LinearCache c;
    return linear_forward(x, w, b, c).cwiseProduct(gy).sum();
  };

  LinearCache cache;
  linear_forward(x, w0, b0, cache);
  const auto g = linear_backward(gy, w0, cache);

  Vector flat(w0.size() + b0.size());
  Vector analytic(flat.size());
  std::copy(w0.data(), w0.data() + w0.size(), flat.data());
  std::copy(b0.data(), b0.data() + b0.size(), flat.data() + w0.size());
  std::copy(g.grad_w.data(), g.grad_w.data() + g.grad_w.size(), analytic.data());
  std::copy(g.grad_b.data(), g.grad_b.data() + g.grad_b.size(), analytic.data() + g.grad_w.size());

  auto f = [&](const Vector& theta) {
    Matrix w(6, 3);
    Vector b(3);
    std::copy(theta.data(), theta.data() + w.size(), w.data());
    std::copy(theta.data() + w.size(), theta.data() + theta.size(), b.data());
    return loss(w, b);
  };
  CHECK(gradient_check(f, flat, analytic) < 1e-6);
}

TEST_CASE("layernorm forward hand-computed row") {
  Matrix x(1, 3);
  x << 1, 2, 3;
  LayerNormCache cache;
  // mean 2, population var 2/3; tiny eps stands in for the spec's eps=0 case
  const Matrix y = layernorm_forward(x, Vector::Ones(3), Vector::Zero(3), 1e-12, cache);
  const double r = std::sqrt(1.5);
  CHECK(y(0, 0) == doctest::Approx(-r).epsilon(1e-6));
  CHECK(y(0, 1) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(y(0, 2) == doctest::Approx(r).epsilon(1e-6));
}

TEST_CASE("layernorm degenerate rows") {
  LayerNormCache cache;
  const Matrix y =
      layernorm_forward(Matrix::Constant(2, 4, 7.0), Vector::Ones(4), Vector::Zero(4), 1e-5, cache);
  CHECK(y.cwiseAbs().maxCoeff() < 1e-9);

  Rng rng(4);
  const Matrix x = random_matrix(2, 4, rng);
  Vector beta = random_vector(4, rng);
  const Matrix y2 = layernorm_forward(x, Vector::Zero(4), beta, 1e-5, cache);
  for (Eigen::Index i = 0; i < 2; ++i) CHECK(y2.row(i).transpose() == beta);
}

TEST_CASE("layernorm output statistics when gamma=1 beta=0") {
  Rng rng(5);
  LayerNormCache cache;
  const Matrix x = random_matrix(6, 32, rng);
  const Matrix y = layernorm_forward(x, Vector::Ones(32), Vector::Zero(32), 1e-5, cache);
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    CHECK(std::abs(y.row(i).mean()) < 1e-10);
    const double var = y.row(i).array().square().sum() / 32.0;
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("layernorm backward 1x1 row gives zero input grad") {
  Matrix x(1, 1), gy(1, 1);
  x << 3;
  gy << 2;
  LayerNormCache cache;
  layernorm_forward(x, Vector::Ones(1), Vector::Zero(1), 1e-5, cache);
  const auto g = layernorm_backward(gy, cache);
  CHECK(g.grad_x(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("layernorm backward matches finite differences") {
  Rng rng(6);
  const Matrix x0 = random_matrix(4, 6, rng);
  const Vector gamma = random_vector(6, rng);
  const Vector beta = random_vector(6, rng);
  const Matrix gy = random_matrix(4, 6, rng);
  const double eps = 1e-5;

  LayerNormCache cache;
  layernorm_forward(x0, gamma, beta, eps, cache);
  const auto g = layernorm_backward(gy, cache);

  Vector flat(x0.size() + 2 * 6);
  Vector analytic(flat.size());
  std::copy(x0.data(), x0.data() + x0.size(), flat.data());
  std::copy(gamma.data(), gamma.data() + 6, flat.data() + x0.size());
  std::copy(beta.data(), beta.data() + 6, flat.data() + x0.size() + 6);
  std::copy(g.grad_x.data(), g.grad_x.data() + g.grad_x.size(), analytic.data());
  std::copy(g.grad_gamma.data(), g.grad_gamma.data() + 6, analytic.data() + x0.size());
  std::copy(g.grad_beta.data(), g.grad_beta.data() + 6, analytic.data() + x0.size() + 6);

  auto f = [&](const Vector& theta) {
    Matrix x(4, 6);
    Vector ga(6), be(6);
    std::copy(theta.data(), theta.data() + x.size(), x.data());
    std::copy(theta.data() + x.size(), theta.data() + x.size() + 6, ga.data());
    std::copy(theta.data() + x.size() + 6, theta.data() + theta.size(), be.data());
    LayerNormCache c;
    return layernorm_forward(x, ga, be, eps, c).cwiseProduct(gy).sum();
  };
  CHECK(gradient_check(f, flat, analytic) < 1e-5);
}

TEST_CASE("gelu values") {
  GeluCache cache;
  Matrix x(1, 3);
  x << 0.0, 1.0, -10.0;
  const Matrix y = gelu_forward(x, cache);
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 1) == doctest::Approx(0.841345).epsilon(1e-5));
  CHECK(std::abs(y(0, 2)) < 1e-6);

  // x * Phi(x) -> x for large x
  Matrix big(1, 1);
  big << 12.0;
  GeluCache c2;
  CHECK(gelu_forward(big, c2)(0, 0) == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("gelu backward matches finite differences") {
  Rng rng(7);
  const Matrix x0 = random_matrix(3, 5, rng);
  const Matrix gy = random_matrix(3, 5, rng);
  GeluCache cache;
  gelu_forward(x0, cache);
  const Matrix gx = gelu_backward(gy, cache);

  Vector flat(x0.size()), analytic(x0.size());
  std::copy(x0.data(), x0.data() + x0.size(), flat.data());
  std::copy(gx.data(), gx.data() + gx.size(), analytic.data());
  auto f = [&](const Vector& theta) {
    Matrix x(3, 5);
    std::copy(theta.data(), theta.data() + x.size(), x.data());
    GeluCache c;
    return gelu_forward(x, c).cwiseProduct(gy).sum();
  };
  CHECK(gradient_check(f, flat, analytic) < 1e-7);
}

TEST_CASE("dropout identity cases") {
  Rng rng(8);
  DropoutCache cache;
  const Matrix x = random_matrix(4, 4, rng);
  CHECK(dropout_forward(x, 0.0, rng, true, cache) == x);
  CHECK(dropout_forward(x, 0.5, rng, false, cache) == x);
  CHECK_THROWS_AS(dropout_forward(x, 1.0, rng, true, cache), DimensionError);
}

TEST_CASE("inverted dropout preserves expectation") {
  Rng rng(9);
  for (double p : {0.1, 0.5}) {
    DropoutCache cache;
    const Matrix ones = Matrix::Ones(400, 250);  // 1e5 entries
    const Matrix y = dropout_forward(ones, p, rng, true, cache);
    CHECK(y.mean() == doctest::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("dropout backward applies the stored mask") {
  Rng rng(10);
  DropoutCache cache;
  const Matrix x = Matrix::Ones(6, 6);
  const Matrix y = dropout_forward(x, 0.5, rng, true, cache);
  const Matrix gx = dropout_backward(Matrix::Ones(6, 6), cache);
  CHECK(gx == y);  // both are exactly the mask for all-ones inputs
}

TEST_CASE("adam zero gradients leave parameters unchanged") {
  Vector params = Vector::Constant(4, 1.5);
  AdamState state(4);
  for (int i = 0; i < 10; ++i) adam_step(params, Vector::Zero(4), state);
  CHECK(params == Vector::Constant(4, 1.5));
  CHECK(state.t == 10);
}

TEST_CASE("adam first step hand-computed") {
  // m_hat = v_hat = g = 1, so the step is lr / (1 + eps).
  Vector params = Vector::Ones(1);
  AdamState state(1);
  adam_step(params, Vector::Ones(1), state);
  CHECK(params(0) == doctest::Approx(1.0 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam is deterministic") {
  Rng rng(11);
  const Vector g1 = random_vector(8, rng);
  const Vector g2 = random_vector(8, rng);
  Vector pa = Vector::Ones(8), pb = Vector::Ones(8);
  AdamState sa(8), sb(8);
  adam_step(pa, g1, sa);
  adam_step(pa, g2, sa);
  adam_step(pb, g1, sb);
  adam_step(pb, g2, sb);
  CHECK(pa == pb);
}

TEST_CASE("gradient_check on a quadratic is near-exact") {
  Rng rng(12);
  const Vector theta = random_vector(6, rng);
  auto f = [](const Vector& t) { return t.squaredNorm(); };
  const Vector analytic = 2.0 * theta;
  CHECK(gradient_check(f, theta, analytic) < 1e-9);
}

TEST_CASE("gradient_check flags wrong gradients of a constant") {
  auto f = [](const Vector&) { return 3.0; };
  const Vector theta = Vector::Ones(3);
  CHECK(gradient_check(f, theta, Vector::Zero(3)) == 0.0);
  CHECK(gradient_check(f, theta, Vector::Ones(3)) > 0.5);
}
