#include "spixel_ssc/kernels.hpp"

#include <numeric>

namespace spixel_ssc::kernels {

InverseIndex invert_candidates(const IndexMatrix& candidates, int superpixels) {
  const Eigen::Index n = candidates.rows(), G = candidates.cols();
  InverseIndex inv;
  inv.offsets.assign(static_cast<std::size_t>(superpixels) + 1, 0);
  for (Eigen::Index e = 0; e < n * G; ++e) ++inv.offsets[candidates.data()[e] + 1];
  std::partial_sum(inv.offsets.begin(), inv.offsets.end(), inv.offsets.begin());
  inv.entries.resize(static_cast<std::size_t>(n * G));
  std::vector<int> fill(inv.offsets.begin(), inv.offsets.end() - 1);
  for (Eigen::Index e = 0; e < n * G; ++e) inv.entries[fill[candidates.data()[e]]++] = static_cast<int>(e);
  return inv;
}

namespace serial {

IndexMatrix candidates(const RowMatrix& coords, const RowMatrix& center_coords, int G) {
  const Eigen::Index n = coords.rows(), m = center_coords.rows();
  const Eigen::Index g_eff = std::min<Eigen::Index>(G, m);
  IndexMatrix out(n, g_eff);
  std::vector<double> d(static_cast<std::size_t>(m));
  std::vector<int> order(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) d[j] = detail::squared_distance(&coords(i, 0), &center_coords(j, 0), 2);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + g_eff, order.end(), detail::CandidateOrder{d.data()});
    for (Eigen::Index g = 0; g < g_eff; ++g) out(i, g) = order[g];
  }
  return out;
}

void assign(const RowMatrix& features, const RowMatrix& coords, const RowMatrix& centers,
            const RowMatrix& center_coords, const Vector& weights, const IndexMatrix& candidates, double tau,
            RowMatrix& dist, RowMatrix& probs) {
  const Eigen::Index n = features.rows(), D = features.cols(), G = candidates.cols();
  dist.resize(n, G);
  probs.resize(n, G);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index g = 0; g < G; ++g) {
      const int j = candidates(i, g);
      const double w = weights[j];
      const double a = detail::squared_distance(&features(i, 0), &centers(j, 0), D);
      const double b = detail::squared_distance(&coords(i, 0), &center_coords(j, 0), 2);
      dist(i, g) = w * a + (1.0 - w) * b;
    }
    detail::softmax_row(&dist(i, 0), tau, &probs(i, 0), G);
  }
}

CenterUpdate update_centers(const RowMatrix& features, const RowMatrix& coords, const RowMatrix& probs,
                            const IndexMatrix& candidates, int superpixels) {
  const Eigen::Index n = features.rows(), D = features.cols(), G = candidates.cols();
  CenterUpdate out{RowMatrix::Zero(superpixels, D), RowMatrix::Zero(superpixels, 2), Vector::Zero(superpixels)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index g = 0; g < G; ++g) {
      const int j = candidates(i, g);
      const double p = probs(i, g);
      out.mass[j] += p;
      for (Eigen::Index k = 0; k < D; ++k) out.centers(j, k) += p * features(i, k);
      for (Eigen::Index k = 0; k < 2; ++k) out.center_coords(j, k) += p * coords(i, k);
    }
  }
  for (int j = 0; j < superpixels; ++j) {
    const double den = out.mass[j] + kMassEpsilon;
    for (Eigen::Index k = 0; k < D; ++k) out.centers(j, k) = out.centers(j, k) / den;
    for (Eigen::Index k = 0; k < 2; ++k) out.center_coords(j, k) = out.center_coords(j, k) / den;
  }
  return out;
}

void update_centers_backward(const RowMatrix& features, const RowMatrix& coords, const RowMatrix& probs,
                             const IndexMatrix& candidates, const CenterUpdate& out,
                             const RowMatrix& centers_bar, const RowMatrix& center_coords_bar,
                             RowMatrix& features_bar, RowMatrix& probs_bar) {
  const Eigen::Index n = features.rows(), D = features.cols(), G = candidates.cols();
  const Eigen::Index m = out.centers.rows();
  // S_j = num_j / den_j  =>  num_bar = S_bar / den,  den_bar = −(S_bar·S_j + R_bar·R_j) / den
  RowMatrix num_bar(m, D), num_coord_bar(m, 2);
  Vector den_bar(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double den = out.mass[j] + kMassEpsilon;
    double dot = 0.0;
    for (Eigen::Index k = 0; k < D; ++k) {
      num_bar(j, k) = centers_bar(j, k) / den;
      dot += centers_bar(j, k) * out.centers(j, k);
    }
    for (Eigen::Index k = 0; k < 2; ++k) {
      num_coord_bar(j, k) = center_coords_bar(j, k) / den;
      dot += center_coords_bar(j, k) * out.center_coords(j, k);
    }
    den_bar[j] = -dot / den;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index g = 0; g < G; ++g) {
      const int j = candidates(i, g);
      const double p = probs(i, g);
      double pb = den_bar[j];
      for (Eigen::Index k = 0; k < D; ++k) {
        pb += num_bar(j, k) * features(i, k);
        features_bar(i, k) += p * num_bar(j, k);
      }
      for (Eigen::Index k = 0; k < 2; ++k) pb += num_coord_bar(j, k) * coords(i, k);
      probs_bar(i, g) += pb;
    }
  }
}

void assign_backward(const RowMatrix& features, const RowMatrix& coords, const RowMatrix& centers,
                     const RowMatrix& center_coords, const Vector& weights, const IndexMatrix& candidates,
                     double tau, const RowMatrix& probs, const RowMatrix& probs_bar, RowMatrix& features_bar,
                     RowMatrix& centers_bar, RowMatrix& center_coords_bar, Vector& weights_bar) {
  const Eigen::Index n = features.rows(), D = features.cols(), G = candidates.cols();
  std::vector<double> dist_bar(static_cast<std::size_t>(G));
  for (Eigen::Index i = 0; i < n; ++i) {
    detail::softmax_row_backward(&probs(i, 0), &probs_bar(i, 0), tau, dist_bar.data(), G);
    for (Eigen::Index g = 0; g < G; ++g) {
      const int j = candidates(i, g);
      const double w = weights[j];
      const double db = dist_bar[g];
      const double a = detail::squared_distance(&features(i, 0), &centers(j, 0), D);
      const double b = detail::squared_distance(&coords(i, 0), &center_coords(j, 0), 2);
      const double a_bar = db * w, b_bar = db * (1.0 - w);
      weights_bar[j] += db * (a - b);
      for (Eigen::Index k = 0; k < D; ++k) {
        const double t = 2.0 * a_bar * (features(i, k) - centers(j, k));
        features_bar(i, k) += t;
        centers_bar(j, k) -= t;
      }
      for (Eigen::Index k = 0; k < 2; ++k) {
        center_coords_bar(j, k) -= 2.0 * b_bar * (coords(i, k) - center_coords(j, k));
      }
    }
  }
}

}  // namespace serial
}  // namespace spixel_ssc::kernels
