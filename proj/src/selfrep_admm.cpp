#include "spixel_ssc/selfrep_admm.hpp"

#include "spixel_ssc/io.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <string>

namespace spixel_ssc::selfrep {

namespace {

constexpr double kZeroColumn = 1e-12;

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

NormalizedFeatures normalize_features(const RowMatrix& centers) {
  const Eigen::Index m = centers.rows(), d = centers.cols();
  NormalizedFeatures out{Matrix(d, m), Vector(m), std::vector<bool>(static_cast<std::size_t>(m), false)};
  int flagged = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double norm = centers.row(j).norm();
    out.norms[j] = norm;
    if (norm < kZeroColumn) {
      out.shat.col(j) = Vector::Unit(d, 0);
      out.degenerate[j] = true;
      ++flagged;
    } else {
      out.shat.col(j) = centers.row(j).transpose() / norm;
    }
  }
  if (flagged > 0) spdlog::debug("{} superpixel centroid(s) with vanishing norm replaced by e_1", flagged);
  return out;
}

RowMatrix normalize_features_backward(const NormalizedFeatures& normalized, const Matrix& shat_bar) {
  const Eigen::Index d = normalized.shat.rows(), m = normalized.shat.cols();
  RowMatrix grad = RowMatrix::Zero(m, d);
  for (Eigen::Index j = 0; j < m; ++j) {
    if (normalized.degenerate[j]) continue;
    const auto s = normalized.shat.col(j);
    const auto sb = shat_bar.col(j);
    grad.row(j) = ((sb - s * s.dot(sb)) / normalized.norms[j]).transpose();
  }
  return grad;
}

GramFactorization gram_factorization(const Matrix& shat, double rho) {
  if (!(rho > 0.0)) throw ValidationError("ADMM penalty rho must be > 0");
  GramFactorization f;
  f.rho = rho;
  f.two_gram.noalias() = 2.0 * shat.transpose() * shat;
  Matrix a = f.two_gram;
  a.diagonal().array() += rho;
  f.llt.compute(a);
  if (f.llt.info() != Eigen::Success) throw NumericalError("Cholesky factorization of 2SᵀS + rho·I failed");
  return f;
}

Matrix c_update(const Matrix& z, const Matrix& mu, const GramFactorization& fact) {
  return fact.solve(fact.two_gram - (mu - fact.rho * z));
}

Matrix z_update(const Matrix& c, const Matrix& mu, double rho, double lambda_sr) {
  const double threshold = lambda_sr / rho;
  Matrix z = (c + mu / rho).unaryExpr([threshold](double v) {
    const double shrunk = std::abs(v) - threshold;
    return shrunk > 0.0 ? std::copysign(shrunk, v) : 0.0;
  });
  z.diagonal().setZero();
  return z;
}

Matrix mu_update(const Matrix& mu, const Matrix& c, const Matrix& z, double rho) { return mu + rho * (c - z); }

Unfolding unfold_forward(const Matrix& shat, int layers, double rho, double lambda_sr) {
  if (layers < 1) throw ValidationError("ADMM unfolding needs at least one layer");
  if (!(lambda_sr >= 0.0)) throw ValidationError("lambda_sr must be >= 0");
  Unfolding u{gram_factorization(shat, rho), lambda_sr, {}};
  u.layers.reserve(static_cast<std::size_t>(layers));

  const Eigen::Index m = shat.cols();
  Matrix z = Matrix::Zero(m, m), mu = Matrix::Zero(m, m);
  for (int k = 0; k < layers; ++k) {
    SelfRepState s;
    s.c = c_update(z, mu, u.fact);
    s.z = z_update(s.c, mu, rho, lambda_sr);
    s.mu = mu_update(mu, s.c, s.z, rho);
    s.rho = rho;
    s.lambda_sr = lambda_sr;
    s.layers = k + 1;
    z = s.z;
    mu = s.mu;
    u.layers.push_back(std::move(s));
  }
  return u;
}

UnfoldingGradient unfold_backward(const Unfolding& u, const Matrix& shat, const Matrix& z_bar) {
  const Eigen::Index m = shat.cols();
  const double rho = u.fact.rho;
  const double threshold = u.lambda_sr / rho;

  Matrix zb = z_bar;
  Matrix mub = Matrix::Zero(m, m);
  Matrix a_bar = Matrix::Zero(m, m);  // adjoint of 2ŜᵀŜ + ρI
  Matrix b_bar = Matrix::Zero(m, m);  // adjoint of the 2ŜᵀŜ right-hand-side term
  double threshold_bar = 0.0;
  const Matrix zero = Matrix::Zero(m, m);

  for (int k = static_cast<int>(u.layers.size()) - 1; k >= 0; --k) {
    const SelfRepState& cur = u.layers[k];
    const Matrix& mu_prev = k > 0 ? u.layers[k - 1].mu : zero;

    // μ' = μ + ρC − ρZ
    Matrix mub_prev = mub;
    Matrix cb = rho * mub;
    const Matrix zb_total = zb - rho * mub;

    // Z = shrink(C + μ/ρ, λ/ρ), diagonal zeroed
    const Matrix v = cur.c + mu_prev / rho;
    Matrix vb = Matrix::Zero(m, m);
    for (Eigen::Index col = 0; col < m; ++col) {
      for (Eigen::Index row = 0; row < m; ++row) {
        if (row == col || !(std::abs(v(row, col)) > threshold)) continue;
        vb(row, col) = zb_total(row, col);
        threshold_bar -= std::copysign(1.0, v(row, col)) * zb_total(row, col);
      }
    }
    cb += vb;
    mub_prev += vb / rho;

    // C = A⁻¹R with R = B − μ + ρZ
    const Matrix rb = u.fact.solve(cb);
    a_bar.noalias() -= rb * cur.c.transpose();
    b_bar += rb;
    mub_prev -= rb;
    zb = rho * rb;
    mub = std::move(mub_prev);
  }

  const Matrix gram_bar = 2.0 * a_bar + 2.0 * b_bar;
  UnfoldingGradient grad;
  grad.shat.noalias() = shat * (gram_bar + gram_bar.transpose());
  grad.lambda_sr = threshold_bar / rho;
  return grad;
}

Matrix affinity(const Matrix& z) {
  const Matrix a = z.cwiseAbs();
  Matrix out = 0.5 * (a + a.transpose());
  out.diagonal().setZero();
  return out;
}

void write_dense_csv(const Matrix& m, const std::filesystem::path& path) {
  std::string text;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) text += ',';
      text += format_value(m(r, c));
    }
    text += '\n';
  }
  io::write_text_atomic(path, text);
}

void write_triplet_csv(const Matrix& m, const std::filesystem::path& path) {
  std::string text = "row,col,value\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (std::abs(m(r, c)) > 1e-10) {
        text += std::to_string(r) + ',' + std::to_string(c) + ',' + format_value(m(r, c)) + '\n';
      }
    }
  }
  io::write_text_atomic(path, text);
}

}  // namespace spixel_ssc::selfrep
