#include "spixel_ssc/common.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

namespace spixel_ssc {

void configure_threads_from_env() {
  const char* env = std::getenv("SPIXEL_SSC_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || n < 1) {
    throw ConfigError("SPIXEL_SSC_THREADS must be a positive integer, got '" + std::string(env) + "'");
  }
  omp_set_num_threads(static_cast<int>(std::min<long>(n, omp_get_num_procs() * 4L)));
}

int max_threads() { return omp_get_max_threads(); }

int Tiling::count() const {
  int n = 0;
  for (int t : tiles_per_row) n += t;
  return n;
}

std::vector<int> Tiling::tile_map() const {
  std::vector<int> map(static_cast<std::size_t>(height) * width);
  const int nrows = rows();
  int first = 0;
  for (int r = 0; r < nrows; ++r) {
    const int y0 = static_cast<int>(static_cast<long>(r) * height / nrows);
    const int y1 = static_cast<int>(static_cast<long>(r + 1) * height / nrows);
    const int ncols = tiles_per_row[r];
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < width; ++x) {
        const int c = static_cast<int>(static_cast<long>(x) * ncols / width);
        map[static_cast<std::size_t>(y) * width + x] = first + c;
      }
    }
    first += ncols;
  }
  return map;
}

Tiling near_square_tiling(int height, int width, int count) {
  if (height < 1 || width < 1) throw ValidationError("tiling needs a non-empty raster");
  if (count < 1 || static_cast<long>(count) > static_cast<long>(height) * width) {
    throw ValidationError("tile count " + std::to_string(count) + " outside [1, " +
                          std::to_string(static_cast<long>(height) * width) + "]");
  }
  int rows = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count) * height / width)));
  rows = std::clamp(rows, 1, std::min(height, count));
  while ((count + rows - 1) / rows > width) ++rows;  // terminates: count <= H·W

  Tiling t{height, width, std::vector<int>(rows, count / rows)};
  for (int r = 0; r < count % rows; ++r) ++t.tiles_per_row[r];
  return t;
}

double softplus(double x) {
  // log1p(exp(x)) without overflow
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (y <= 0.0) throw ValidationError("softplus_inverse needs y > 0");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

}  // namespace spixel_ssc
