#include "spixel_ssc/kernels.hpp"

#include <numeric>

namespace spixel_ssc::kernels::parallel {

IndexMatrix candidates(const RowMatrix& coords, const RowMatrix& center_coords, int G) {
  const Eigen::Index n = coords.rows(), m = center_coords.rows();
  const Eigen::Index g_eff = std::min<Eigen::Index>(G, m);
  IndexMatrix out(n, g_eff);
  if (n == 0 || g_eff == 0) return out;

  // Bucket the centers on a unit grid over the coordinate bounding box, then
  // scan Chebyshev rings of buckets around each pixel until no unvisited
  // bucket can hold anything closer than the current G-th best.
  const double y0 = std::min(coords.col(0).minCoeff(), center_coords.col(0).minCoeff());
  const double x0 = std::min(coords.col(1).minCoeff(), center_coords.col(1).minCoeff());
  const double y1 = std::max(coords.col(0).maxCoeff(), center_coords.col(0).maxCoeff());
  const double x1 = std::max(coords.col(1).maxCoeff(), center_coords.col(1).maxCoeff());
  const int rows = static_cast<int>(std::floor(y1 - y0)) + 1, cols = static_cast<int>(std::floor(x1 - x0)) + 1;
  auto bucket_of = [&](const double* r) {
    const int by = std::clamp(static_cast<int>(std::floor(r[0] - y0)), 0, rows - 1);
    const int bx = std::clamp(static_cast<int>(std::floor(r[1] - x0)), 0, cols - 1);
    return std::pair{by, bx};
  };
  std::vector<int> offsets(static_cast<std::size_t>(rows) * cols + 1, 0);
  std::vector<int> members(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto [by, bx] = bucket_of(&center_coords(j, 0));
    ++offsets[static_cast<std::size_t>(by) * cols + bx + 1];
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  {
    std::vector<int> fill(offsets.begin(), offsets.end() - 1);
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto [by, bx] = bucket_of(&center_coords(j, 0));
      members[static_cast<std::size_t>(fill[static_cast<std::size_t>(by) * cols + bx]++)] = static_cast<int>(j);
    }
  }
  const int max_ring = std::max(rows, cols);

#pragma omp parallel
  {
    std::vector<double> best_d(static_cast<std::size_t>(g_eff));
    std::vector<int> best_j(static_cast<std::size_t>(g_eff));
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index filled = 0;
      auto consider = [&](int j) {
        const double dj = detail::squared_distance(&coords(i, 0), &center_coords(j, 0), 2);
        auto before = [&](Eigen::Index k) { return dj < best_d[k] || (dj == best_d[k] && j < best_j[k]); };
        if (filled == g_eff && !before(g_eff - 1)) return;
        Eigen::Index pos = filled < g_eff ? filled++ : g_eff - 1;
        while (pos > 0 && before(pos - 1)) {
          best_d[pos] = best_d[pos - 1];
          best_j[pos] = best_j[pos - 1];
          --pos;
        }
        best_d[pos] = dj;
        best_j[pos] = j;
      };
      const auto [py, px] = bucket_of(&coords(i, 0));
      for (int ring = 0; ring <= max_ring; ++ring) {
        for (int by = py - ring; by <= py + ring; ++by) {
          if (by < 0 || by >= rows) continue;
          const bool edge_row = by == py - ring || by == py + ring;
          for (int bx = px - ring; bx <= px + ring; bx += (edge_row || ring == 0) ? 1 : 2 * ring) {
            if (bx < 0 || bx >= cols) continue;
            const std::size_t b = static_cast<std::size_t>(by) * cols + bx;
            for (int k = offsets[b]; k < offsets[b + 1]; ++k) consider(members[static_cast<std::size_t>(k)]);
          }
        }
        // anything in ring + 1 or beyond lies at distance >= ring
        if (filled == g_eff && best_d[g_eff - 1] < static_cast<double>(ring) * ring) break;
      }
      for (Eigen::Index g = 0; g < g_eff; ++g) out(i, g) = best_j[g];
    }
  }
  return out;
}

void assign(const RowMatrix& features, const RowMatrix& coords, const RowMatrix& centers,
            const RowMatrix& center_coords, const Vector& weights, const IndexMatrix& candidates, double tau,
            RowMatrix& dist, RowMatrix& probs) {
  const Eigen::Index n = features.rows(), D = features.cols(), G = candidates.cols();
  dist.resize(n, G);
  probs.resize(n, G);
#pragma omp parallel for schedule(static)
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
  const Eigen::Index D = features.cols(), G = candidates.cols();
  const InverseIndex inv = invert_candidates(candidates, superpixels);
  CenterUpdate out{RowMatrix::Zero(superpixels, D), RowMatrix::Zero(superpixels, 2), Vector::Zero(superpixels)};
#pragma omp parallel for schedule(dynamic, 8)
  for (int j = 0; j < superpixels; ++j) {
    for (int e = inv.offsets[j]; e < inv.offsets[j + 1]; ++e) {
      const int flat = inv.entries[e];
      const Eigen::Index i = flat / G, g = flat % G;
      const double p = probs(i, g);
      out.mass[j] += p;
      for (Eigen::Index k = 0; k < D; ++k) out.centers(j, k) += p * features(i, k);
      for (Eigen::Index k = 0; k < 2; ++k) out.center_coords(j, k) += p * coords(i, k);
    }
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
  RowMatrix num_bar(m, D), num_coord_bar(m, 2);
  Vector den_bar(m);
#pragma omp parallel for schedule(static)
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
#pragma omp parallel for schedule(static)
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
  const int m = static_cast<int>(centers.rows());

  // pixel-local half: distance adjoints and the feature gradient
  RowMatrix dist_bar(n, G);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    detail::softmax_row_backward(&probs(i, 0), &probs_bar(i, 0), tau, &dist_bar(i, 0), G);
    for (Eigen::Index g = 0; g < G; ++g) {
      const int j = candidates(i, g);
      const double a_bar = dist_bar(i, g) * weights[j];
      for (Eigen::Index k = 0; k < D; ++k) {
        features_bar(i, k) += 2.0 * a_bar * (features(i, k) - centers(j, k));
      }
    }
  }

  // superpixel half: gather over contributing pixels in increasing order
  const InverseIndex inv = invert_candidates(candidates, m);
#pragma omp parallel for schedule(dynamic, 8)
  for (int j = 0; j < m; ++j) {
    const double w = weights[j];
    for (int e = inv.offsets[j]; e < inv.offsets[j + 1]; ++e) {
      const int flat = inv.entries[e];
      const Eigen::Index i = flat / G, g = flat % G;
      const double db = dist_bar(i, g);
      const double a = detail::squared_distance(&features(i, 0), &centers(j, 0), D);
      const double b = detail::squared_distance(&coords(i, 0), &center_coords(j, 0), 2);
      const double a_bar = db * w, b_bar = db * (1.0 - w);
      weights_bar[j] += db * (a - b);
      for (Eigen::Index k = 0; k < D; ++k) centers_bar(j, k) -= 2.0 * a_bar * (features(i, k) - centers(j, k));
      for (Eigen::Index k = 0; k < 2; ++k) {
        center_coords_bar(j, k) -= 2.0 * b_bar * (coords(i, k) - center_coords(j, k));
      }
    }
  }
}

}  // namespace spixel_ssc::kernels::parallel
