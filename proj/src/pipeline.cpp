#include "spixel_ssc/pipeline.hpp"

#include "spixel_ssc/selfrep_admm.hpp"

#include <chrono>
#include <numeric>
#include <vector>

namespace spixel_ssc {

namespace {

class StageTimer {
 public:
  explicit StageTimer(std::map<std::string, double>& sink) : sink_(sink) {}
  void lap(const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    sink_[name] += std::chrono::duration<double>(now - last_).count();
    last_ = now;
  }

 private:
  std::map<std::string, double>& sink_;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace

cluster::ClusterResult cluster_superpixels(const Matrix& affinity, std::span<const int> owners, int classes,
                                           std::uint64_t seed) {
  const Eigen::Index m = affinity.rows();
  std::vector<char> used(static_cast<std::size_t>(m), 0);
  for (int j : owners) used[static_cast<std::size_t>(j)] = 1;
  std::vector<int> active;
  for (Eigen::Index j = 0; j < m; ++j) {
    if (used[static_cast<std::size_t>(j)]) active.push_back(static_cast<int>(j));
  }
  if (static_cast<int>(active.size()) < classes) {
    active.resize(static_cast<std::size_t>(m));
    std::iota(active.begin(), active.end(), 0);
  }

  const Eigen::Index k = static_cast<Eigen::Index>(active.size());
  Matrix sub(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = affinity(active[a], active[b]);
  const auto spectral = cluster::spectral_cluster(sub, classes, seed);

  cluster::ClusterResult out;
  out.eigengap = spectral.eigengap;
  out.superpixel_labels.assign(static_cast<std::size_t>(m), 0);
  for (Eigen::Index a = 0; a < k; ++a) out.superpixel_labels[active[a]] = spectral.labels[a];
  for (Eigen::Index j = 0; j < m; ++j) {
    if (out.superpixel_labels[j] != 0) continue;
    int best = 1;
    double strongest = 0.0;
    for (Eigen::Index a = 0; a < k; ++a) {
      if (affinity(j, active[a]) > strongest) {
        strongest = affinity(j, active[a]);
        best = spectral.labels[a];
      }
    }
    out.superpixel_labels[j] = best;
  }
  return out;
}

PipelineResult run_pipeline(const hsi::HsiCube& cube, const hsi::LabelMap* ground_truth,
                            const train::TrainConfig& config, int superpixels, const PipelineOptions& options) {
  if (options.classes < 1) throw ConfigError("number of classes must be >= 1");
  if (options.classes > superpixels) {
    throw ConfigError("number of classes exceeds the superpixel count");
  }
  if (ground_truth && (ground_truth->height != cube.height || ground_truth->width != cube.width)) {
    throw ValidationError("ground-truth dimensions do not match the cube");
  }

  PipelineResult out;
  out.superpixels = superpixels;
  StageTimer timer(out.stage_seconds);

  out.training = train::train(cube, config, superpixels, options.outputs);
  timer.lap("train");

  const auto& trace = out.training.final_trace;
  const auto& hard = trace.superpixels.assignment.hard;
  if (options.enforce_connectivity) {
    out.segmentation = spixel::enforce_connectivity(hard, cube.height, cube.width, superpixels);
  } else {
    out.segmentation.labels = hard;
    out.segmentation.source.resize(static_cast<std::size_t>(superpixels));
    for (int j = 0; j < superpixels; ++j) out.segmentation.source[static_cast<std::size_t>(j)] = j;
  }
  timer.lap("connectivity");

  out.affinity = selfrep::affinity(trace.unfolding.state().z);
  out.clusters = cluster_superpixels(out.affinity, out.segmentation.source, options.classes, config.seed);
  timer.lap("spectral");

  std::vector<int> segment_labels(out.segmentation.source.size());
  for (std::size_t s = 0; s < segment_labels.size(); ++s) {
    segment_labels[s] = out.clusters.superpixel_labels[static_cast<std::size_t>(out.segmentation.source[s])];
  }
  out.clusters.pixel_labels = cluster::propagate(segment_labels, out.segmentation.labels);

  if (ground_truth) {
    const std::vector<int> gt(ground_truth->labels.begin(), ground_truth->labels.end());
    out.metrics = cluster::evaluate(out.clusters.pixel_labels, gt);
  }
  timer.lap("evaluate");
  return out;
}

}  // namespace spixel_ssc
