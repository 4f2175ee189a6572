#include "spixel_ssc/cluster_metrics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>

namespace spixel_ssc::cluster {

namespace {

constexpr double kDegreeGuard = 1e-12;
constexpr int kRestarts = 20;

double sq_dist(const RowMatrix& a, Eigen::Index i, const RowMatrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

// greedy k-means++: each new center is the best of 2 + ln k D²-weighted draws
RowMatrix greedy_seeding(const RowMatrix& x, int k, std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  const int trials = 2 + static_cast<int>(std::log(static_cast<double>(k)));
  RowMatrix centers(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  centers.row(0) = x.row(pick(rng));
  std::vector<double> closest(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) closest[i] = sq_dist(x, i, centers, 0);

  for (int c = 1; c < k; ++c) {
    double potential = 0.0;
    for (double d : closest) potential += d;
    Eigen::Index best_candidate = -1;
    double best_potential = std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
      Eigen::Index cand = 0;
      if (potential > 0.0) {
        double r = unit(rng) * potential;
        while (cand < n - 1 && r >= closest[cand]) r -= closest[cand++];
      } else {
        cand = pick(rng);
      }
      double pot = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) pot += std::min(closest[i], (x.row(i) - x.row(cand)).squaredNorm());
      if (pot < best_potential) {
        best_potential = pot;
        best_candidate = cand;
      }
    }
    centers.row(c) = x.row(best_candidate);
    for (Eigen::Index i = 0; i < n; ++i) closest[i] = std::min(closest[i], sq_dist(x, i, centers, c));
  }
  return centers;
}

KMeansResult lloyd(const RowMatrix& x, RowMatrix centers, int max_iterations) {
  const Eigen::Index n = x.rows();
  const int k = static_cast<int>(centers.rows());
  KMeansResult res{std::vector<int>(static_cast<std::size_t>(n), -1), std::move(centers), 0.0};
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(x, i, res.centers, 0);
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(x, i, res.centers, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (res.labels[i] != best) {
        res.labels[i] = best;
        changed = true;
      }
    }
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    RowMatrix sums = RowMatrix::Zero(k, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(res.labels[i]) += x.row(i);
      ++counts[res.labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        res.centers.row(c) = sums.row(c) / counts[c];
        continue;
      }
      // empty cluster: move it onto the point farthest from its center
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = sq_dist(x, i, res.centers, res.labels[i]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      res.centers.row(c) = x.row(far);
      res.labels[far] = c;
      changed = true;
    }
    if (!changed) break;
  }
  res.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) res.inertia += sq_dist(x, i, res.centers, res.labels[i]);
  return res;
}

}  // namespace

KMeansResult kmeans(const RowMatrix& points, int k, int restarts, std::uint64_t seed, int max_iterations) {
  if (k < 1 || k > points.rows()) {
    throw ValidationError("k-means needs 1 <= k <= points, got k=" + std::to_string(k) + " for " +
                          std::to_string(points.rows()) + " points");
  }
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    KMeansResult res = lloyd(points, greedy_seeding(points, k, rng), max_iterations);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

SpectralResult spectral_cluster(const Matrix& affinity, int k, std::uint64_t seed) {
  const Eigen::Index m = affinity.rows();
  if (affinity.cols() != m) throw ValidationError("affinity must be square");
  if (k < 1 || k > m) {
    throw ValidationError("cannot form " + std::to_string(k) + " clusters from " + std::to_string(m) + " nodes");
  }
  const Vector degree = affinity.rowwise().sum();
  const Eigen::Index isolated = (degree.array() < kDegreeGuard).count();
  if (isolated > 0) spdlog::warn("spectral clustering: {} isolated node(s) in the affinity graph", isolated);
  const Vector inv_sqrt = degree.unaryExpr([](double d) { return 1.0 / std::sqrt(std::max(d, kDegreeGuard)); });

  Matrix laplacian = -(inv_sqrt.asDiagonal() * affinity * inv_sqrt.asDiagonal());
  laplacian.diagonal().array() += 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(laplacian);
  if (eig.info() != Eigen::Success) throw NumericalError("Laplacian eigendecomposition failed");

  RowMatrix embedding = eig.eigenvectors().leftCols(k);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double norm = embedding.row(i).norm();
    if (norm > kDegreeGuard) embedding.row(i) /= norm;
  }
  const KMeansResult km = kmeans(embedding, k, kRestarts, seed);

  SpectralResult out;
  out.eigenvalues = eig.eigenvalues();
  out.eigengap = k < m ? out.eigenvalues[k] - out.eigenvalues[k - 1] : 0.0;
  out.labels.resize(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) out.labels[i] = km.labels[i] + 1;
  return out;
}

std::vector<int> propagate(std::span<const int> superpixel_labels, std::span<const int> pixel_to_superpixel) {
  std::vector<int> out(pixel_to_superpixel.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int s = pixel_to_superpixel[i];
    if (s < 0 || static_cast<std::size_t>(s) >= superpixel_labels.size()) {
      throw ValidationError("pixel " + std::to_string(i) + " refers to unknown superpixel " + std::to_string(s));
    }
    out[i] = superpixel_labels[s];
  }
  return out;
}

std::vector<int> hungarian(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw ValidationError("hungarian needs a square cost matrix");
  constexpr double inf = std::numeric_limits<double>::infinity();
  // potentials formulation, 1-based with a virtual column 0
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

namespace {

void check_sizes(std::span<const int> pred, std::span<const int> gt) {
  if (pred.size() != gt.size()) {
    throw ValidationError("prediction has " + std::to_string(pred.size()) + " labels, ground truth " +
                          std::to_string(gt.size()));
  }
}

template <typename Map>
int index_of(const Map& m, int key) {
  return static_cast<int>(std::distance(m.begin(), m.find(key)));
}

}  // namespace

LabelMatching match_labels(std::span<const int> pred, std::span<const int> gt) {
  check_sizes(pred, gt);
  std::map<int, int> true_set, pred_set;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == 0) continue;
    true_set.emplace(gt[i], 0);
    pred_set.emplace(pred[i], 0);
  }
  LabelMatching out;
  for (const auto& kv : true_set) out.true_labels.push_back(kv.first);
  for (const auto& kv : pred_set) out.pred_labels.push_back(kv.first);
  if (true_set.empty()) throw ValidationError("ground truth has no labeled pixels");

  const int rows = static_cast<int>(true_set.size()), cols = static_cast<int>(pred_set.size());
  const int n = std::max(rows, cols);
  Matrix counts = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == 0) continue;
    counts(index_of(true_set, gt[i]), index_of(pred_set, pred[i])) += 1.0;
    ++out.labeled;
  }
  const std::vector<int> assign = hungarian(counts.maxCoeff() - counts.array());

  out.pred_to_true.assign(static_cast<std::size_t>(cols), 0);
  int spare = out.true_labels.back();
  for (int r = 0; r < n; ++r) {
    const int c = assign[r];
    if (c >= cols) continue;
    if (r < rows) {
      out.pred_to_true[c] = out.true_labels[r];
      out.matched += static_cast<long>(counts(r, c));
    } else {
      out.pred_to_true[c] = ++spare;
    }
  }
  return out;
}

std::vector<int> apply_matching(const LabelMatching& matching, std::span<const int> pred) {
  std::map<int, int> lookup;
  for (std::size_t c = 0; c < matching.pred_labels.size(); ++c) lookup[matching.pred_labels[c]] = matching.pred_to_true[c];
  std::vector<int> out(pred.begin(), pred.end());
  for (auto& p : out) {
    if (auto it = lookup.find(p); it != lookup.end()) p = it->second;
  }
  return out;
}

double overall_accuracy(std::span<const int> pred, std::span<const int> gt) {
  const LabelMatching m = match_labels(pred, gt);
  return static_cast<double>(m.matched) / static_cast<double>(m.labeled);
}

double nmi(std::span<const int> pred, std::span<const int> gt) {
  check_sizes(pred, gt);
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pu, pv;
  double total = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == 0) continue;
    joint[{gt[i], pred[i]}] += 1.0;
    pu[gt[i]] += 1.0;
    pv[pred[i]] += 1.0;
    total += 1.0;
  }
  if (total == 0.0) throw ValidationError("ground truth has no labeled pixels");
  auto entropy = [total](const std::map<int, double>& m) {
    double h = 0.0;
    for (const auto& [_, c] : m) h -= (c / total) * std::log(c / total);
    return h;
  };
  double mi = 0.0;
  for (const auto& [key, c] : joint) {
    mi += (c / total) * std::log(c * total / (pu[key.first] * pv[key.second]));
  }
  const double denom = 0.5 * (entropy(pu) + entropy(pv));
  if (denom <= 0.0) return 0.0;
  return std::clamp(mi / denom, 0.0, 1.0);
}

double kappa(std::span<const int> pred_matched, std::span<const int> gt) {
  check_sizes(pred_matched, gt);
  std::map<int, double> rows, cols;
  double agree = 0.0, total = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == 0) continue;
    rows[gt[i]] += 1.0;
    cols[pred_matched[i]] += 1.0;
    if (gt[i] == pred_matched[i]) agree += 1.0;
    total += 1.0;
  }
  if (total == 0.0) throw ValidationError("ground truth has no labeled pixels");
  const double po = agree / total;
  double pe = 0.0;
  for (const auto& [label, count] : rows) {
    if (auto it = cols.find(label); it != cols.end()) pe += (count / total) * (it->second / total);
  }
  if (pe >= 1.0) return 0.0;
  return (po - pe) / (1.0 - pe);
}

MetricReport evaluate(std::span<const int> pred, std::span<const int> gt) {
  const LabelMatching m = match_labels(pred, gt);
  const std::vector<int> aligned = apply_matching(m, pred);

  MetricReport r;
  r.oa = static_cast<double>(m.matched) / static_cast<double>(m.labeled);
  r.nmi = nmi(pred, gt);
  r.kappa = kappa(aligned, gt);

  // columns follow the true-label order, unmatched predictions after them
  std::map<int, int> column;
  for (std::size_t t = 0; t < m.true_labels.size(); ++t) column[m.true_labels[t]] = static_cast<int>(t);
  int next = static_cast<int>(m.true_labels.size());
  for (int p : m.pred_to_true) {
    if (!column.count(p)) column[p] = next++;
  }
  const int n = std::max(next, static_cast<int>(m.true_labels.size()));
  r.confusion.assign(static_cast<std::size_t>(n), std::vector<long>(static_cast<std::size_t>(n), 0));
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == 0) continue;
    r.confusion[column.at(gt[i])][column.at(aligned[i])] += 1;
  }
  return r;
}

nlohmann::json to_json(const MetricReport& report) {
  return {{"oa", report.oa},
          {"oa_percent", std::round(report.oa * 10000.0) / 100.0},
          {"nmi", report.nmi},
          {"kappa", report.kappa},
          {"confusion", report.confusion}};
}

}  // namespace spixel_ssc::cluster
