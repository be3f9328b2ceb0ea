#pragma once

#include <Eigen/Core>
#include <cmath>

namespace tvu::test {

// M(i, j) = sin(offset + 0.7 i + 1.3 j); mirrored by tests/oracle/reference_values.py.
inline Eigen::MatrixXd pattern(Eigen::Index rows, Eigen::Index cols, double offset) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = std::sin(offset + 0.7 * double(i) + 1.3 * double(j));
  return m;
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace tvu::test
