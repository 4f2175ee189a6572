#pragma once

#include "spixel_ssc/common.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace spixel_ssc::cluster {

struct SpectralResult {
  std::vector<int> labels;  // 1..k per node
  Vector eigenvalues;       // ascending spectrum of L_sym
  double eigengap = 0.0;    // λ_{k+1} − λ_k (0 when k = M)
};

/// Normalized-Laplacian spectral clustering: L_sym = I − D^{-1/2} A D^{-1/2},
/// the k smallest eigenvectors with rows ℓ2-normalized, then k-means with
/// greedy k-means++ seeding and 20 restarts. Deterministic for a fixed seed.
SpectralResult spectral_cluster(const Matrix& affinity, int k, std::uint64_t seed);

struct KMeansResult {
  std::vector<int> labels;  // 0..k-1
  RowMatrix centers;
  double inertia = 0.0;
};

KMeansResult kmeans(const RowMatrix& points, int k, int restarts, std::uint64_t seed, int max_iterations = 300);

/// pixel_labels[i] = superpixel_labels[pixel_to_superpixel[i]].
std::vector<int> propagate(std::span<const int> superpixel_labels, std::span<const int> pixel_to_superpixel);

struct ClusterResult {
  std::vector<int> superpixel_labels;
  std::vector<int> pixel_labels;
  double eigengap = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix; returns the column
/// assigned to each row.
std::vector<int> hungarian(const Matrix& cost);

/// Best one-to-one matching of predicted onto true labels (gt == 0 ignored).
struct LabelMatching {
  std::vector<int> true_labels;  // sorted distinct nonzero gt labels
  std::vector<int> pred_labels;  // sorted distinct pred labels on labeled pixels
  std::vector<int> pred_to_true; // per pred_labels entry; unmatched get labels past the true range
  long matched = 0;              // pixels on the matched diagonal
  long labeled = 0;
};

LabelMatching match_labels(std::span<const int> pred, std::span<const int> gt);

/// Relabels pred through the matching (labels on unlabeled pixels pass through).
std::vector<int> apply_matching(const LabelMatching& matching, std::span<const int> pred);

double overall_accuracy(std::span<const int> pred, std::span<const int> gt);
/// MI normalized by the arithmetic mean of the two entropies.
double nmi(std::span<const int> pred, std::span<const int> gt);
/// Cohen's κ; `pred_matched` should already be aligned to gt label values.
double kappa(std::span<const int> pred_matched, std::span<const int> gt);

struct MetricReport {
  double oa = 0.0;
  double nmi = 0.0;
  double kappa = 0.0;
  /// rows: true classes, columns: matched predictions (square, zero-padded)
  std::vector<std::vector<long>> confusion;
};

MetricReport evaluate(std::span<const int> pred, std::span<const int> gt);

/// {oa, oa_percent, nmi, kappa, confusion}
nlohmann::json to_json(const MetricReport& report);

}  // namespace spixel_ssc::cluster
