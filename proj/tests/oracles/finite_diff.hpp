#pragma once
// Central finite differences over every entry of a parameter block.
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>

namespace oracle {

template <typename Derived>
Eigen::MatrixXd central_difference(Eigen::MatrixBase<Derived>& x, const std::function<double()>& f,
                                   double h = 1e-4) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double saved = x(r, c);
      x(r, c) = saved + h;
      const double up = f();
      x(r, c) = saved - h;
      const double down = f();
      x(r, c) = saved;
      g(r, c) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

inline double central_difference(double& x, const std::function<double()>& f, double h = 1e-4) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

// ‖analytic − numeric‖∞ / max(‖numeric‖∞, floor)
template <typename A, typename B>
double relative_error(const Eigen::MatrixBase<A>& analytic, const Eigen::MatrixBase<B>& numeric,
                      double floor = 1e-8) {
  const double scale = std::max(numeric.cwiseAbs().maxCoeff(), floor);
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max(std::abs(numeric), floor);
}

}  // namespace oracle
