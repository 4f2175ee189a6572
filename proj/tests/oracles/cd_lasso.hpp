#pragma once
// Cyclic coordinate-descent solver for min_c ‖s − A c‖² + λ‖c‖₁, used as an
// independent reference for the unfolded ADMM layers.
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace oracle {

inline Eigen::VectorXd cd_lasso(const Eigen::MatrixXd& a, const Eigen::VectorXd& s, double lambda,
                                int max_sweeps = 200000, double tol = 1e-15) {
  const Eigen::Index n = a.cols();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = s;  // s − A c
  const Eigen::VectorXd norms = a.colwise().squaredNorm().transpose();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double largest = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (norms[k] == 0.0) continue;
      const double rho = a.col(k).dot(r) + norms[k] * c[k];
      const double shrunk = std::copysign(std::max(std::abs(rho) - 0.5 * lambda, 0.0), rho) / norms[k];
      const double step = shrunk - c[k];
      if (step != 0.0) {
        r -= step * a.col(k);
        c[k] = shrunk;
        largest = std::max(largest, std::abs(step));
      }
    }
    if (largest < tol) break;
  }
  return c;
}

// Column j of the self-representation solved against all other columns;
// entry j of the result is 0.
inline Eigen::VectorXd lasso_column(const Eigen::MatrixXd& shat, Eigen::Index j, double lambda) {
  const Eigen::Index m = shat.cols();
  Eigen::MatrixXd others(shat.rows(), m - 1);
  for (Eigen::Index k = 0, o = 0; k < m; ++k) {
    if (k != j) others.col(o++) = shat.col(k);
  }
  const Eigen::VectorXd c = cd_lasso(others, shat.col(j), lambda);
  Eigen::VectorXd full = Eigen::VectorXd::Zero(m);
  for (Eigen::Index k = 0, o = 0; k < m; ++k) {
    if (k != j) full[k] = c[o++];
  }
  return full;
}

}  // namespace oracle
