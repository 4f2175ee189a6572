#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace spixel_ssc {

// Pixel-major matrices (N×D features, M×D centroids, N×2 coordinates) are
// row-major so that a pixel's spectrum is contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or truncated files, unwritable outputs.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Inputs that violate a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Bad or incomplete run configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite intermediate or failed factorization (CLI exit code 1).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Applies SPIXEL_SSC_THREADS (if set) as the OpenMP thread cap.
void configure_threads_from_env();
int max_threads();

/// Row split of an H×W raster into `count` near-square tiles.
///
/// rows = ceil(sqrt(count·H/W)) (clamped so every tile is non-empty), and the
/// count is spread evenly over the rows, earlier rows taking the remainder.
struct Tiling {
  int height = 0;
  int width = 0;
  std::vector<int> tiles_per_row;

  int rows() const { return static_cast<int>(tiles_per_row.size()); }
  int count() const;
  /// Tile index of every pixel, raster order.
  std::vector<int> tile_map() const;
};

Tiling near_square_tiling(int height, int width, int count);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus(double x);
double softplus_inverse(double y);

}  // namespace spixel_ssc
