#include "spixel_ssc/losses.hpp"

#include <cmath>
#include <vector>

namespace spixel_ssc::losses {

LossReport compose(LossReport parts, double alpha) {
  parts.rep = 2.0 * parts.recon + parts.l1 + parts.entropy;
  parts.total = total_loss(parts, alpha);
  return parts;
}

double total_loss(const LossReport& parts, double alpha) {
  return alpha * parts.rep + (parts.spixel_compact + parts.spixel_consistency) + parts.noise;
}

namespace {

double row_norm(const RowMatrix& probs, Eigen::Index i) { return probs.row(i).norm(); }

// Σ_g Σ_g' p_ig p_ng' over shared candidates
double embedded_dot(const RowMatrix& probs, const IndexMatrix& cand, Eigen::Index i, Eigen::Index n) {
  double dot = 0.0;
  for (Eigen::Index g = 0; g < cand.cols(); ++g) {
    for (Eigen::Index h = 0; h < cand.cols(); ++h) {
      if (cand(i, g) == cand(n, h)) dot += probs(i, g) * probs(n, h);
    }
  }
  return dot;
}

long neighbor_pairs(int height, int width) {
  return static_cast<long>(height) * (width - 1) + static_cast<long>(height - 1) * width;
}

}  // namespace

SpixelTerms spixel_loss(const RowMatrix& features, const RowMatrix& quantized, const RowMatrix& probs,
                        const IndexMatrix& candidates, int height, int width) {
  const Eigen::Index n = features.rows();
  SpixelTerms terms;
  terms.compact = (features - quantized).squaredNorm() / static_cast<double>(n);

  const long pairs = neighbor_pairs(height, width);
  if (pairs == 0) return terms;
  std::vector<double> per_pixel(static_cast<std::size_t>(n), 0.0);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = static_cast<int>(i / width), x = static_cast<int>(i % width);
    const double ni = row_norm(probs, i);
    double acc = 0.0;
    if (x + 1 < width) acc += 1.0 - embedded_dot(probs, candidates, i, i + 1) / (ni * row_norm(probs, i + 1));
    if (y + 1 < height) acc += 1.0 - embedded_dot(probs, candidates, i, i + width) / (ni * row_norm(probs, i + width));
    per_pixel[i] = acc;
  }
  double sum = 0.0;
  for (double v : per_pixel) sum += v;
  terms.consistency = sum / static_cast<double>(pairs);
  return terms;
}

void spixel_loss_backward(const RowMatrix& features, const RowMatrix& quantized, const RowMatrix& probs,
                          const IndexMatrix& candidates, int height, int width, double weight_compact,
                          double weight_consistency, RowMatrix& features_bar, RowMatrix& quantized_bar,
                          RowMatrix& probs_bar) {
  const Eigen::Index n = features.rows(), G = candidates.cols();
  if (weight_compact != 0.0) {
    const RowMatrix diff = (2.0 * weight_compact / static_cast<double>(n)) * (features - quantized);
    features_bar += diff;
    quantized_bar -= diff;
  }
  const long pairs = neighbor_pairs(height, width);
  if (weight_consistency == 0.0 || pairs == 0) return;
  const double scale = weight_consistency / static_cast<double>(pairs);

#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = static_cast<int>(i / width), x = static_cast<int>(i % width);
    const double nu = row_norm(probs, i);
    const Eigen::Index nbrs[4] = {x + 1 < width ? i + 1 : -1, y + 1 < height ? i + width : -1,
                                  x > 0 ? i - 1 : -1, y > 0 ? i - width : -1};
    for (Eigen::Index nb : nbrs) {
      if (nb < 0) continue;
      const double nv = row_norm(probs, nb);
      const double cosine = embedded_dot(probs, candidates, i, nb) / (nu * nv);
      // ∂(1 − cos)/∂u = −(v/(|u||v|) − cos·u/|u|²)
      for (Eigen::Index g = 0; g < G; ++g) {
        double v_g = 0.0;
        for (Eigen::Index h = 0; h < G; ++h) {
          if (candidates(i, g) == candidates(nb, h)) v_g = probs(nb, h);
        }
        probs_bar(i, g) -= scale * (v_g / (nu * nv) - cosine * probs(i, g) / (nu * nu));
      }
    }
  }
}

double recon_loss(const Matrix& shat, const Matrix& z) { return (shat * z - shat).squaredNorm(); }

void recon_loss_backward(const Matrix& shat, const Matrix& z, double weight, Matrix& shat_bar, Matrix& z_bar) {
  if (weight == 0.0) return;
  const Matrix residual = shat * z - shat;
  Matrix z_minus_i = z;
  z_minus_i.diagonal().array() -= 1.0;
  shat_bar.noalias() += (2.0 * weight) * residual * z_minus_i.transpose();
  z_bar.noalias() += (2.0 * weight) * shat.transpose() * residual;
}

double l1_loss(const Matrix& z) { return z.cwiseAbs().sum(); }

void l1_loss_backward(const Matrix& z, double weight, Matrix& z_bar) {
  if (weight == 0.0) return;
  z_bar += weight * z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

double entropy_loss(const Matrix& z) {
  const Eigen::Index m = z.cols();
  if (m == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double col_sum = z.col(j).cwiseAbs().sum();
    double h = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double c = std::abs(z(i, j)) / (col_sum + kEntropyEpsilon);
      h -= c * std::log(c + kEntropyEpsilon);
    }
    total += h;
  }
  return total / static_cast<double>(m);
}

void entropy_loss_backward(const Matrix& z, double weight, Matrix& z_bar) {
  const Eigen::Index m = z.cols();
  if (weight == 0.0 || m == 0) return;
  const double scale = weight / static_cast<double>(m);
  Vector c_bar(z.rows());
  for (Eigen::Index j = 0; j < m; ++j) {
    const double den = z.col(j).cwiseAbs().sum() + kEntropyEpsilon;
    double weighted = 0.0;  // Σ_i c̄_ij |z_ij|
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double a = std::abs(z(i, j));
      const double c = a / den;
      c_bar[i] = -scale * (std::log(c + kEntropyEpsilon) + c / (c + kEntropyEpsilon));
      weighted += c_bar[i] * a;
    }
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double v = z(i, j);
      if (v == 0.0) continue;
      const double a_bar = c_bar[i] / den - weighted / (den * den);
      z_bar(i, j) += v > 0.0 ? a_bar : -a_bar;
    }
  }
}

double noise_loss(const RowMatrix& delta, double lambda) {
  if (delta.size() == 0) return 0.0;
  return lambda / static_cast<double>(delta.size()) * delta.squaredNorm();
}

void noise_loss_backward(const RowMatrix& delta, double lambda, double weight, RowMatrix& delta_bar) {
  if (weight == 0.0 || delta.size() == 0) return;
  delta_bar += (2.0 * weight * lambda / static_cast<double>(delta.size())) * delta;
}

}  // namespace spixel_ssc::losses
