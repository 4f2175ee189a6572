#pragma once

#include "spixel_ssc/common.hpp"

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

namespace testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("spixel_ssc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ignored;
    std::filesystem::remove_all(path_, ignored);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline spixel_ssc::RowMatrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                           double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  return spixel_ssc::RowMatrix::NullaryExpr(rows, cols, [&] { return normal(rng); });
}

// Unit-norm columns drawn round-robin from `subspaces` random subspaces of
// dimension `dim` in R^rows, plus N(0, noise²) per entry before normalizing.
inline spixel_ssc::Matrix union_of_subspaces(Eigen::Index rows, Eigen::Index cols, int subspaces, int dim,
                                             double noise, std::mt19937_64& rng) {
  std::vector<spixel_ssc::Matrix> bases;
  for (int c = 0; c < subspaces; ++c) {
    const spixel_ssc::Matrix g = random_matrix(rows, dim, rng);
    bases.push_back(Eigen::HouseholderQR<spixel_ssc::Matrix>(g).householderQ() *
                    spixel_ssc::Matrix::Identity(rows, dim));
  }
  spixel_ssc::Matrix s(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    s.col(j) = bases[j % subspaces] * random_matrix(dim, 1, rng) + random_matrix(rows, 1, rng, noise);
  }
  s.colwise().normalize();
  return s;
}

}  // namespace testing
