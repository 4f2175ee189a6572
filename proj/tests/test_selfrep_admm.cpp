#include "spixel_ssc/selfrep_admm.hpp"

#include "oracles/cd_lasso.hpp"
#include "oracles/finite_diff.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace spixel_ssc;
using namespace spixel_ssc::selfrep;

namespace {

Matrix unit_columns(Eigen::Index d, Eigen::Index m, std::mt19937_64& rng) {
  Matrix s = testing::random_matrix(d, m, rng);
  s.colwise().normalize();
  return s;
}

}  // namespace

TEST_CASE("normalization of a 3-4-5 centroid") {
  RowMatrix centers(2, 2);
  centers << 3, 4, 0, 0;
  const auto n = normalize_features(centers);
  CHECK(n.shat(0, 0) == doctest::Approx(0.6));
  CHECK(n.shat(1, 0) == doctest::Approx(0.8));
  CHECK(n.norms[0] == 5.0);
  CHECK_FALSE(n.degenerate[0]);
  // vanishing column becomes e_1 and receives no gradient
  CHECK(n.degenerate[1]);
  CHECK(n.shat.col(1) == Vector::Unit(2, 0));
  const auto g = normalize_features_backward(n, Matrix::Ones(2, 2));
  CHECK(g.row(1).isZero(0.0));
}

TEST_CASE("normalization backward matches finite differences") {
  std::mt19937_64 rng(1);
  RowMatrix centers = testing::random_matrix(5, 4, rng);
  const Matrix weight = testing::random_matrix(4, 5, rng);
  auto loss = [&] { return (normalize_features(centers).shat.array() * weight.array()).sum(); };
  const auto g = normalize_features_backward(normalize_features(centers), weight);
  CHECK(oracle::relative_error(Matrix(g), oracle::central_difference(centers, loss, 1e-6)) <= 1e-7);
}

TEST_CASE("orthonormal columns give Gram matrix 2I + rho") {
  const Matrix shat = Matrix::Identity(3, 3);
  const auto f = gram_factorization(shat, 1.0);
  CHECK(f.two_gram.isApprox(2.0 * Matrix::Identity(3, 3)));
  // C = (3I)⁻¹(2I) with Z = μ = 0
  const Matrix c = c_update(Matrix::Zero(3, 3), Matrix::Zero(3, 3), f);
  CHECK(c.isApprox((2.0 / 3.0) * Matrix::Identity(3, 3)));
  CHECK_THROWS_AS(gram_factorization(shat, 0.0), ValidationError);
}

TEST_CASE("C update solves its linear system") {
  std::mt19937_64 rng(2);
  const Matrix shat = unit_columns(6, 5, rng);
  const Matrix z = testing::random_matrix(5, 5, rng), mu = testing::random_matrix(5, 5, rng);
  const auto f = gram_factorization(shat, 0.7);
  const Matrix c = c_update(z, mu, f);
  const Matrix lhs = (2.0 * shat.transpose() * shat + 0.7 * Matrix::Identity(5, 5)) * c;
  const Matrix rhs = 2.0 * shat.transpose() * shat - mu + 0.7 * z;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("Z update soft-thresholds and zeros the diagonal") {
  Matrix c(2, 2), mu(2, 2);
  c << 0.9, 0.5, -0.5, 0.05;
  mu << 0.0, 0.2, 0.0, 0.0;
  const Matrix z = z_update(c, mu, 2.0, 0.2);  // threshold 0.1, v = c + μ/2
  CHECK(z(0, 0) == 0.0);
  CHECK(z(0, 1) == doctest::Approx(0.5));
  CHECK(z(1, 0) == doctest::Approx(-0.4));
  CHECK(z(1, 1) == 0.0);
}

TEST_CASE("multiplier update") {
  const Matrix mu = Matrix::Ones(2, 2), c = Matrix::Constant(2, 2, 3.0), z = Matrix::Constant(2, 2, 1.0);
  CHECK(mu_update(mu, c, z, 0.5) == Matrix::Constant(2, 2, 2.0));
}

TEST_CASE("200 layers drive the primal residual below 1e-5") {
  std::mt19937_64 rng(3);
  const Matrix shat = unit_columns(10, 12, rng);
  const auto u = unfold_forward(shat, 200, 1.0, 0.1);
  CHECK((u.state().c - u.state().z).norm() <= 1e-5);
  CHECK(u.layers.size() == 200u);
  CHECK(u.state().z.diagonal().isZero(0.0));
}

TEST_CASE("primal residual shrinks over the layers") {
  std::mt19937_64 rng(4);
  const auto u = unfold_forward(unit_columns(8, 10, rng), 120, 1.0, 0.1);
  auto residual = [&](int k) { return (u.layers[k].c - u.layers[k].z).norm(); };
  CHECK(residual(119) < residual(59));
  CHECK(residual(59) < residual(9));
}

TEST_CASE("unfolded ADMM converges to the coordinate-descent LASSO solution") {
  // K is large here: at rho = 1 the layers contract slowly once the
  // dictionary has correlated columns.
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    std::mt19937_64 rng(10 + seed);
    const Matrix shat = testing::union_of_subspaces(12, 9, 3, 2, 0.05, rng);
    for (double lambda : {0.05, 0.2}) {
      const auto u = unfold_forward(shat, 5000, 1.0, lambda);
      for (Eigen::Index j = 0; j < 9; ++j) {
        const Vector ref = oracle::lasso_column(shat, j, lambda);
        CHECK((u.state().z.col(j) - ref).cwiseAbs().maxCoeff() <= 1e-8);
      }
    }
  }
}

TEST_CASE("nearly orthogonal dictionaries converge within 200 layers") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    std::mt19937_64 rng(30 + seed);
    const Matrix shat = unit_columns(40, 6, rng);
    for (double lambda : {0.05, 0.2}) {
      const auto u = unfold_forward(shat, 200, 1.0, lambda);
      for (Eigen::Index j = 0; j < 6; ++j) {
        const Vector ref = oracle::lasso_column(shat, j, lambda);
        CHECK((u.state().z.col(j) - ref).cwiseAbs().maxCoeff() <= 1e-4);
      }
    }
  }
}

TEST_CASE("duplicated columns represent each other") {
  std::mt19937_64 rng(5);
  Matrix shat = unit_columns(6, 4, rng);
  shat.col(3) = shat.col(1);
  const auto u = unfold_forward(shat, 300, 1.0, 0.01);
  const Matrix& z = u.state().z;
  CHECK(z(1, 3) > 0.9);
  CHECK(z(3, 1) > 0.9);
}

TEST_CASE("very large lambda gives Z = 0") {
  std::mt19937_64 rng(6);
  const auto u = unfold_forward(unit_columns(5, 6, rng), 50, 1.0, 1e3);
  CHECK(u.state().z.isZero(0.0));
}

TEST_CASE("lambda 0 with more bands than superpixels reaches least squares without the diagonal") {
  std::mt19937_64 rng(7);
  const Matrix shat = unit_columns(20, 5, rng);
  const auto u = unfold_forward(shat, 400, 1.0, 0.0);
  for (Eigen::Index j = 0; j < 5; ++j) {
    const Vector ref = oracle::lasso_column(shat, j, 0.0);
    CHECK((u.state().z.col(j) - ref).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("unfolding validates its arguments") {
  const Matrix shat = Matrix::Identity(3, 3);
  CHECK_THROWS_AS(unfold_forward(shat, 0, 1.0, 0.1), ValidationError);
  CHECK_THROWS_AS(unfold_forward(shat, 3, 1.0, -0.1), ValidationError);
}

TEST_CASE("reverse pass through the layers matches finite differences") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(20 + seed);
    Matrix shat = unit_columns(6, 5, rng);
    double lambda = 0.15;
    const Matrix weight = testing::random_matrix(5, 5, rng);
    auto loss = [&] { return (unfold_forward(shat, 7, 1.3, lambda).state().z.array() * weight.array()).sum(); };
    const auto u = unfold_forward(shat, 7, 1.3, lambda);
    const auto g = unfold_backward(u, shat, weight);
    CHECK(oracle::relative_error(g.shat, oracle::central_difference(shat, loss, 1e-6)) <= 1e-6);
    CHECK(oracle::relative_error(g.lambda_sr, oracle::central_difference(lambda, loss, 1e-6)) <= 1e-6);
  }
}

TEST_CASE("affinity symmetrizes magnitudes") {
  Matrix z(2, 2);
  z << 0.5, -0.4, 0.2, 0.0;
  const Matrix a = affinity(z);
  CHECK(a(0, 0) == 0.0);
  CHECK(a(0, 1) == doctest::Approx(0.3));
  CHECK(a(1, 0) == doctest::Approx(0.3));
  std::mt19937_64 rng(8);
  const Matrix b = affinity(testing::random_matrix(7, 7, rng));
  CHECK(b == b.transpose());
  CHECK(b.minCoeff() >= 0.0);
}

TEST_CASE("coefficient CSV files round-trip at full precision") {
  testing::TempDir dir;
  Matrix z(2, 3);
  z << 0.1, -1.0 / 3.0, 0.0, 1e-12, 2.5, -7.0;
  write_dense_csv(z, dir / "z.csv");
  write_triplet_csv(z, dir / "t.csv");
  std::ifstream dense(dir / "z.csv");
  std::string line;
  std::getline(dense, line);
  std::stringstream first(line);
  std::string cell;
  std::vector<double> row;
  while (std::getline(first, cell, ',')) row.push_back(std::stod(cell));
  CHECK(row == std::vector<double>{0.1, -1.0 / 3.0, 0.0});
  std::ifstream triplets(dir / "t.csv");
  std::vector<std::string> lines;
  while (std::getline(triplets, line)) lines.push_back(line);
  CHECK(lines.size() == 5u);  // header + four entries above 1e-10
  CHECK(lines[0] == "row,col,value");
  CHECK(lines[1] == "0,0,0.10000000000000001");
}
