#include "relamix/matrix.hpp"

namespace relamix {

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(),
          "matmul: inner dimensions differ, " + shape_str(a) + " vs " + shape_str(b));
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  const Eigen::Index n = a.rows(), k = a.cols(), m = b.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index p = 0; p < k; ++p) {
      const double aip = a(i, p);
      for (Eigen::Index j = 0; j < m; ++j) c(i, j) += aip * b(p, j);
    }
  }
  return c;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace relamix
