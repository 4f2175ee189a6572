#pragma once

// Pixel-parallel kernels of the superpixel network.
//
// Every kernel exists twice with the same signature: `serial` is the plain
// reference loop kept for testing, `parallel` is the OpenMP version the
// pipeline runs. Sums over pixels that feed a superpixel are accumulated in
// increasing (pixel, candidate) order in both variants, so the two agree
// bit-for-bit regardless of thread count.
//
// Shapes: N pixels, D bands, M superpixels, G candidates per pixel.
//   features  N×D    coords   N×2    centers M×D    center_coords M×2
//   weights   M      (effective compactness w_j in (0,1))
//   candidates N×G   superpixel indices, row i is the candidate set of pixel i

#include "spixel_ssc/common.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace spixel_ssc::kernels {

/// Soft-mass guard added to every centroid denominator.
inline constexpr double kMassEpsilon = 1e-8;

struct CenterUpdate {
  RowMatrix centers;        // M×D
  RowMatrix center_coords;  // M×2
  Vector mass;              // M, sum of probabilities (without the guard)
};

/// Pixel/candidate pairs grouped by superpixel, in increasing flat index
/// i·G + g. Lets reductions over pixels run as per-superpixel gathers.
struct InverseIndex {
  std::vector<int> offsets;  // M+1
  std::vector<int> entries;  // flat i·G + g
};
InverseIndex invert_candidates(const IndexMatrix& candidates, int superpixels);

namespace serial {

IndexMatrix candidates(const RowMatrix& coords, const RowMatrix& center_coords, int G);

/// d_ig = w_j‖x_i − s_j‖² + (1 − w_j)‖r_i − r(s_j)‖², p = softmax(−d/τ) per row.
void assign(const RowMatrix& features, const RowMatrix& coords, const RowMatrix& centers,
            const RowMatrix& center_coords, const Vector& weights, const IndexMatrix& candidates,
            double tau, RowMatrix& dist, RowMatrix& probs);

CenterUpdate update_centers(const RowMatrix& features, const RowMatrix& coords, const RowMatrix& probs,
                            const IndexMatrix& candidates, int superpixels);

/// Adjoint of update_centers. Accumulates into features_bar and probs_bar.
void update_centers_backward(const RowMatrix& features, const RowMatrix& coords, const RowMatrix& probs,
                             const IndexMatrix& candidates, const CenterUpdate& out,
                             const RowMatrix& centers_bar, const RowMatrix& center_coords_bar,
                             RowMatrix& features_bar, RowMatrix& probs_bar);

/// Adjoint of assign. Accumulates into features_bar, centers_bar,
/// center_coords_bar and weights_bar.
void assign_backward(const RowMatrix& features, const RowMatrix& coords, const RowMatrix& centers,
                     const RowMatrix& center_coords, const Vector& weights, const IndexMatrix& candidates,
                     double tau, const RowMatrix& probs, const RowMatrix& probs_bar, RowMatrix& features_bar,
                     RowMatrix& centers_bar, RowMatrix& center_coords_bar, Vector& weights_bar);

}  // namespace serial

namespace parallel {

IndexMatrix candidates(const RowMatrix& coords, const RowMatrix& center_coords, int G);

void assign(const RowMatrix& features, const RowMatrix& coords, const RowMatrix& centers,
            const RowMatrix& center_coords, const Vector& weights, const IndexMatrix& candidates,
            double tau, RowMatrix& dist, RowMatrix& probs);

CenterUpdate update_centers(const RowMatrix& features, const RowMatrix& coords, const RowMatrix& probs,
                            const IndexMatrix& candidates, int superpixels);

void update_centers_backward(const RowMatrix& features, const RowMatrix& coords, const RowMatrix& probs,
                             const IndexMatrix& candidates, const CenterUpdate& out,
                             const RowMatrix& centers_bar, const RowMatrix& center_coords_bar,
                             RowMatrix& features_bar, RowMatrix& probs_bar);

void assign_backward(const RowMatrix& features, const RowMatrix& coords, const RowMatrix& centers,
                     const RowMatrix& center_coords, const Vector& weights, const IndexMatrix& candidates,
                     double tau, const RowMatrix& probs, const RowMatrix& probs_bar, RowMatrix& features_bar,
                     RowMatrix& centers_bar, RowMatrix& center_coords_bar, Vector& weights_bar);

}  // namespace parallel

namespace detail {

// Shared per-element arithmetic so both variants round identically.

inline double squared_distance(const double* a, const double* b, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

/// Row softmax of −dist/τ with max-subtraction.
inline void softmax_row(const double* dist, double tau, double* probs, Eigen::Index G) {
  double lo = dist[0];
  for (Eigen::Index g = 1; g < G; ++g) lo = std::min(lo, dist[g]);
  double total = 0.0;
  for (Eigen::Index g = 0; g < G; ++g) {
    probs[g] = std::exp(-(dist[g] - lo) / tau);
    total += probs[g];
  }
  for (Eigen::Index g = 0; g < G; ++g) probs[g] /= total;
}

/// dL/dd_ig from dL/dp_ig for one softmax row.
inline void softmax_row_backward(const double* probs, const double* probs_bar, double tau, double* dist_bar,
                                 Eigen::Index G) {
  double dot = 0.0;
  for (Eigen::Index g = 0; g < G; ++g) dot += probs[g] * probs_bar[g];
  for (Eigen::Index g = 0; g < G; ++g) dist_bar[g] = -probs[g] * (probs_bar[g] - dot) / tau;
}

/// Candidate ordering: smaller squared distance first, ties to lower index.
struct CandidateOrder {
  const double* d;
  bool operator()(int a, int b) const { return d[a] < d[b] || (d[a] == d[b] && a < b); }
};

}  // namespace detail

}  // namespace spixel_ssc::kernels
