#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace relamix {

// Row-major so parameter files and CSV rows serialize in natural order.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

// Fixed accumulation order (k ascending per output element), bit-deterministic
// and identical to the naive triple loop.
Matrix matmul(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& m);

}  // namespace relamix
