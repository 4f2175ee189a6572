#pragma once

#include "spixel_ssc/common.hpp"
#include "spixel_ssc/kernels.hpp"

#include <span>
#include <vector>

namespace spixel_ssc::spixel {

inline constexpr int kDefaultCandidates = 9;

/// Raster geometry plus the grid step sqrt(N/M) that scales pixel coordinates
/// so spatial distances are measured in superpixel-cell units.
struct Geometry {
  int height = 0;
  int width = 0;
  double step = 1.0;

  Eigen::Index pixels() const { return static_cast<Eigen::Index>(height) * width; }
};

Geometry make_geometry(int height, int width, int superpixels);

/// (row, col) / step for every pixel, N×2.
RowMatrix pixel_coords(const Geometry& geometry);

/// X' = X + delta together with the fixed coordinate operator r(.).
struct AdaptedFeatures {
  RowMatrix values;  // N×D
  RowMatrix coords;  // N×2
};

struct SuperpixelState {
  RowMatrix centers;        // S, M×D
  RowMatrix center_coords;  // r(S), M×2

  int count() const { return static_cast<int>(centers.rows()); }
};

/// Per-superpixel compactness w_j = sigmoid(raw_j).
struct CompactnessWeights {
  Vector raw;

  static CompactnessWeights neutral(int superpixels) { return {Vector::Zero(superpixels)}; }
  Vector effective() const;
};

struct SoftAssignment {
  IndexMatrix candidates;  // N×G
  RowMatrix probs;         // N×G, rows sum to 1
  double tau = 0.1;
  std::vector<int> hard;   // N, argmax superpixel per pixel
};

struct GridInit {
  SuperpixelState state;
  std::vector<int> cell;       // cell index of every pixel
  std::vector<int> cell_size;  // pixels per cell
};

/// Grid-partition initialization: S_j is the mean spectrum of cell j and
/// r(S_j) the mean coordinate (cell center).
GridInit init_grid(const AdaptedFeatures& features, const Geometry& geometry, int superpixels);

/// The G spatially nearest superpixels per pixel (G clamped to M), ties to
/// the lower index.
IndexMatrix candidate_superpixels(const SuperpixelState& state, const RowMatrix& coords, int G);

RowMatrix compute_distances(const AdaptedFeatures& features, const SuperpixelState& state, const Vector& weights,
                            const IndexMatrix& candidates);

/// Row softmax of −dist/τ. Throws ValidationError for τ <= 0.
RowMatrix soft_assign(const RowMatrix& dist, double tau);

SuperpixelState update_centers(const AdaptedFeatures& features, const RowMatrix& probs,
                               const IndexMatrix& candidates, int superpixels);

/// Argmax candidate per pixel; ties resolve to the lowest superpixel index.
std::vector<int> hard_labels(const RowMatrix& probs, const IndexMatrix& candidates);

/// One refinement round, kept for the reverse pass.
struct Iteration {
  SuperpixelState input;
  IndexMatrix candidates;
  RowMatrix probs;
  kernels::CenterUpdate output;
};

struct SuperpixelRun {
  GridInit init;
  std::vector<Iteration> iterations;
  SuperpixelState final_state;
  SoftAssignment assignment;
};

struct SuperpixelOptions {
  int superpixels = 0;
  int iterations = 10;
  double tau = 0.1;
  int candidates = kDefaultCandidates;
};

/// Grid init, then `iterations` rounds of candidates -> distances -> softmax ->
/// center update, then hard labels from the last soft assignment.
SuperpixelRun run_superpixels(const AdaptedFeatures& features, const Geometry& geometry, const Vector& weights,
                              const SuperpixelOptions& options);

struct SuperpixelGradient {
  RowMatrix features;  // dL/dX', N×D
  Vector weights;      // dL/dw (effective), M
};

/// Reverse pass of run_superpixels. `centers_bar` is the adjoint of the final
/// centers, `probs_bar` that of the last soft assignment. Candidate sets and
/// hard labels are treated as constants.
SuperpixelGradient run_superpixels_backward(const SuperpixelRun& run, const AdaptedFeatures& features,
                                            const Vector& weights, double tau, const RowMatrix& centers_bar,
                                            const RowMatrix& probs_bar);

/// F_i = S_{L_i}.
RowMatrix quantized_features(const SuperpixelState& state, std::span<const int> hard);

/// Final segmentation after connectivity enforcement. `labels` are dense
/// segment ids; `source[s]` is the model superpixel segment s descends from.
struct Segmentation {
  std::vector<int> labels;
  std::vector<int> source;

  int count() const { return static_cast<int>(source.size()); }
};

/// Splits every label into 4-connected components, merges components smaller
/// than N/(4M) into the neighbor sharing the longest boundary, and relabels
/// densely ordered by (source label, first pixel).
Segmentation enforce_connectivity(std::span<const int> hard, int height, int width, int superpixels);

}  // namespace spixel_ssc::spixel
