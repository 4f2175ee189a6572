#pragma once

#include "spixel_ssc/cluster_metrics.hpp"
#include "spixel_ssc/hsi_data.hpp"
#include "spixel_ssc/spixel_net.hpp"
#include "spixel_ssc/train.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>

namespace spixel_ssc {

struct PipelineResult {
  train::TrainResult training;
  spixel::Segmentation segmentation;
  Matrix affinity;  // over model superpixels
  cluster::ClusterResult clusters;
  std::optional<cluster::MetricReport> metrics;
  int superpixels = 0;
  std::map<std::string, double> stage_seconds;
};

struct PipelineOptions {
  int classes = 0;
  bool enforce_connectivity = true;
  train::TrainOutputs outputs;
};

/// Spectral clustering restricted to the superpixels listed in `owners`
/// (those that own pixels); the rest take the label of their strongest
/// clustered neighbor (1 when isolated). Falls back to all superpixels when
/// fewer than `classes` own pixels. pixel_labels is left empty.
cluster::ClusterResult cluster_superpixels(const Matrix& affinity, std::span<const int> owners, int classes,
                                           std::uint64_t seed);

/// train -> connectivity -> affinity of Z -> spectral clustering over the
/// superpixels -> per-pixel labels -> metrics (when ground truth is given).
/// `cube` is expected to be standardized already.
PipelineResult run_pipeline(const hsi::HsiCube& cube, const hsi::LabelMap* ground_truth,
                            const train::TrainConfig& config, int superpixels, const PipelineOptions& options);

}  // namespace spixel_ssc
