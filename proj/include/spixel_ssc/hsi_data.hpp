#pragma once

#include "spixel_ssc/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace spixel_ssc::hsi {

/// H×W×D cube stored pixel-major: values(i, b) is band b of pixel i = y·W + x.
struct HsiCube {
  int height = 0;
  int width = 0;
  int bands = 0;
  RowMatrix values;
  /// Statistics removed by standardize(); zero mean / unit std until then.
  Vector band_mean;
  Vector band_std;

  Eigen::Index pixels() const { return static_cast<Eigen::Index>(height) * width; }
};

/// Ground-truth or predicted labels; 0 means unlabeled.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint16_t> labels;

  /// Number of distinct nonzero labels.
  int classes() const;
  std::size_t labeled() const;
};

/// Maps the distinct nonzero labels onto 1..classes, preserving their order.
LabelMap densify(const LabelMap& map);

enum class RegionLayout { blocks, voronoi };

struct SynthSpec {
  int height = 64;
  int width = 64;
  int bands = 20;
  int classes = 4;
  int subspace_dim = 3;
  double noise_sigma = 0.05;
  RegionLayout region_layout = RegionLayout::blocks;
  std::uint64_t seed = 0;
};

/// `<stem>.hsi.json` -> `<stem>.hsi.raw`, `<stem>.lbl.json` -> `<stem>.lbl.raw`.
std::filesystem::path companion_raw(const std::filesystem::path& header);

HsiCube load_cube(const std::filesystem::path& header);
void save_cube(const HsiCube& cube, const std::filesystem::path& header);

LabelMap load_labels(const std::filesystem::path& header);
void save_labels(const LabelMap& labels, const std::filesystem::path& header);

/// Per-band z-scoring with the population standard deviation. Constant bands
/// become all-zero with a recorded std of 1.
HsiCube standardize(HsiCube cube);

/// Lattice spacing (pixels) of the smooth synthetic coefficient fields.
inline constexpr int kCoefficientSpacing = 16;

/// Union-of-subspaces cube: one random orthonormal D×d basis per class, pixel
/// spectrum = basis·u plus N(0, sigma²) noise per band. Each coefficient u_k is
/// a spatially smooth field (bilinear over a lattice of U[0,1) values).
std::pair<HsiCube, LabelMap> make_synthetic(const SynthSpec& spec);

/// Stand-in scene-complexity estimate: Sobel magnitude of the mean band image,
/// pixels above Otsu's threshold counted as edges E, returns ceil(E/64).
int edge_superpixel_estimate(const HsiCube& cube);

/// ceil(50·classes / area_ratio).
int superpixel_lower_bound(int classes, double area_ratio);

/// Superpixel count M. The override wins outright; otherwise
/// max(edge estimate, lower bound) clamped to [classes, N/4]. The area ratio is
/// labeled/N when labels are given, else 1. `classes` falls back to the label
/// map's class count.
int choose_superpixel_count(const HsiCube& cube, const LabelMap* labels,
                            std::optional<int> classes, std::optional<int> override_count);

}  // namespace spixel_ssc::hsi
