#include "spixel_ssc/losses.hpp"

#include "oracles/finite_diff.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace spixel_ssc;
using namespace spixel_ssc::losses;

namespace {

// 5×5 raster, 3 candidates per pixel drawn from 4 superpixels, random rows.
struct SpixelFixture {
  int h = 5, w = 5;
  RowMatrix features, quantized, probs;
  IndexMatrix candidates;

  explicit SpixelFixture(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    features = testing::random_matrix(25, 3, rng);
    quantized = testing::random_matrix(25, 3, rng);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    probs = RowMatrix::NullaryExpr(25, 3, [&] { return u(rng); });
    probs.array().colwise() /= probs.rowwise().sum().array();
    candidates.resize(25, 3);
    for (int i = 0; i < 25; ++i) {
      const int skip = static_cast<int>(rng() % 4);
      for (int j = 0, g = 0; j < 4; ++j) {
        if (j != skip) candidates(i, g++) = j;
      }
    }
  }
  SpixelTerms terms() const { return spixel_loss(features, quantized, probs, candidates, h, w); }
};

}  // namespace

TEST_CASE("reconstruction loss examples") {
  const Matrix shat = Matrix::Identity(3, 3);
  CHECK(recon_loss(shat, Matrix::Zero(3, 3)) == 3.0);
  CHECK(recon_loss(shat, Matrix::Identity(3, 3)) == 0.0);
}

TEST_CASE("l1 loss example") {
  Matrix z(2, 2);
  z << 1, -2, 0, 0.5;
  CHECK(l1_loss(z) == 3.5);
}

TEST_CASE("entropy of an even split is log 2, of a one-hot column is 0") {
  Matrix z(3, 2);
  z << 0.5, 0.0,  //
      -0.5, 0.0,  //
      0.0, 2.0;
  // column 0 contributes ln 2, column 1 contributes 0; averaged over 2 columns
  CHECK(entropy_loss(z) == doctest::Approx(std::log(2.0) / 2.0).epsilon(1e-6));
  CHECK(entropy_loss(Matrix::Zero(3, 3)) == 0.0);
}

TEST_CASE("noise loss of unit residuals equals its weight") {
  CHECK(noise_loss(RowMatrix::Ones(4, 3), 50.0) == doctest::Approx(50.0));
  CHECK(noise_loss(RowMatrix::Zero(4, 3)) == 0.0);
}

TEST_CASE("consistency is 0 for identical rows and 1 for disjoint supports") {
  RowMatrix probs(2, 2);
  probs << 0.7, 0.3, 0.7, 0.3;
  IndexMatrix cand(2, 2);
  cand << 0, 1, 0, 1;
  const RowMatrix x = RowMatrix::Zero(2, 1);
  CHECK(spixel_loss(x, x, probs, cand, 1, 2).consistency == doctest::Approx(0.0));
  cand << 0, 1, 2, 3;
  CHECK(spixel_loss(x, x, probs, cand, 1, 2).consistency == doctest::Approx(1.0));
  // the same superpixel listed in a different candidate slot still matches
  cand << 0, 1, 1, 0;
  probs << 1.0, 0.0, 0.0, 1.0;
  CHECK(spixel_loss(x, x, probs, cand, 1, 2).consistency == doctest::Approx(0.0));
}

TEST_CASE("compactness is the mean squared quantization error") {
  RowMatrix x(2, 2), f(2, 2);
  x << 1, 2, 3, 4;
  f << 1, 0, 3, 5;
  const RowMatrix p = RowMatrix::Ones(2, 1);
  const IndexMatrix c = IndexMatrix::Zero(2, 1);
  CHECK(spixel_loss(x, f, p, c, 2, 1).compact == doctest::Approx(2.5));
  CHECK(spixel_loss(x, x, p, c, 2, 1).compact == 0.0);
}

TEST_CASE("superpixel loss gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SpixelFixture fx(seed);
    const double wc = 0.7, wk = 1.9;
    auto loss = [&] {
      const auto t = fx.terms();
      return wc * t.compact + wk * t.consistency;
    };
    RowMatrix fb = RowMatrix::Zero(25, 3), qb = RowMatrix::Zero(25, 3), pb = RowMatrix::Zero(25, 3);
    spixel_loss_backward(fx.features, fx.quantized, fx.probs, fx.candidates, 5, 5, wc, wk, fb, qb, pb);
    CHECK(oracle::relative_error(Matrix(fb), oracle::central_difference(fx.features, loss, 1e-6)) <= 1e-4);
    CHECK(oracle::relative_error(Matrix(qb), oracle::central_difference(fx.quantized, loss, 1e-6)) <= 1e-4);
    CHECK(oracle::relative_error(Matrix(pb), oracle::central_difference(fx.probs, loss, 1e-6)) <= 1e-4);
  }
}

TEST_CASE("self-representation loss gradients match finite differences") {
  std::mt19937_64 rng(9);
  Matrix shat = testing::random_matrix(4, 5, rng);
  Matrix z = testing::random_matrix(5, 5, rng);
  {
    auto loss = [&] { return recon_loss(shat, z); };
    Matrix sb = Matrix::Zero(4, 5), zb = Matrix::Zero(5, 5);
    recon_loss_backward(shat, z, 1.0, sb, zb);
    CHECK(oracle::relative_error(sb, oracle::central_difference(shat, loss, 1e-6)) <= 1e-4);
    CHECK(oracle::relative_error(zb, oracle::central_difference(z, loss, 1e-6)) <= 1e-4);
  }
  {
    auto loss = [&] { return l1_loss(z); };
    Matrix zb = Matrix::Zero(5, 5);
    l1_loss_backward(z, 1.0, zb);
    CHECK(oracle::relative_error(zb, oracle::central_difference(z, loss, 1e-6)) <= 1e-4);
  }
  {
    auto loss = [&] { return entropy_loss(z); };
    Matrix zb = Matrix::Zero(5, 5);
    entropy_loss_backward(z, 1.0, zb);
    CHECK(oracle::relative_error(zb, oracle::central_difference(z, loss, 1e-6)) <= 1e-4);
  }
  {
    RowMatrix delta = testing::random_matrix(5, 5, rng);
    auto loss = [&] { return noise_loss(delta, 50.0); };
    RowMatrix db = RowMatrix::Zero(5, 5);
    noise_loss_backward(delta, 50.0, 1.0, db);
    CHECK(oracle::relative_error(Matrix(db), oracle::central_difference(delta, loss, 1e-6)) <= 1e-4);
  }
}

TEST_CASE("backward weights scale linearly and zero weight leaves buffers untouched") {
  std::mt19937_64 rng(10);
  const Matrix z = testing::random_matrix(4, 4, rng);
  Matrix one = Matrix::Zero(4, 4), three = Matrix::Zero(4, 4), none = Matrix::Zero(4, 4);
  entropy_loss_backward(z, 1.0, one);
  entropy_loss_backward(z, 3.0, three);
  entropy_loss_backward(z, 0.0, none);
  CHECK((three - 3.0 * one).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(none.isZero(0.0));
}

TEST_CASE("composition identities hold exactly") {
  LossReport parts;
  parts.spixel_compact = 0.3;
  parts.spixel_consistency = 0.11;
  parts.recon = 1.7;
  parts.l1 = 4.25;
  parts.entropy = 0.9;
  parts.noise = 0.02;
  for (double alpha : {0.0, 1.0, 10.0, 0.37}) {
    const auto r = compose(parts, alpha);
    CHECK(r.rep == 2.0 * parts.recon + parts.l1 + parts.entropy);
    CHECK(r.total == alpha * r.rep + (parts.spixel_compact + parts.spixel_consistency) + parts.noise);
    CHECK(total_loss(r, alpha) == r.total);
  }
}
