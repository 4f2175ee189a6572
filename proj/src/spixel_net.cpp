#include "spixel_ssc/spixel_net.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

namespace spixel_ssc::spixel {

Geometry make_geometry(int height, int width, int superpixels) {
  if (height < 1 || width < 1) throw ValidationError("geometry needs a non-empty raster");
  if (superpixels < 1) throw ValidationError("superpixel count must be positive");
  const double n = static_cast<double>(height) * width;
  return {height, width, std::sqrt(n / superpixels)};
}

RowMatrix pixel_coords(const Geometry& geometry) {
  RowMatrix coords(geometry.pixels(), 2);
  for (int y = 0; y < geometry.height; ++y) {
    for (int x = 0; x < geometry.width; ++x) {
      const Eigen::Index i = static_cast<Eigen::Index>(y) * geometry.width + x;
      coords(i, 0) = y / geometry.step;
      coords(i, 1) = x / geometry.step;
    }
  }
  return coords;
}

Vector CompactnessWeights::effective() const { return raw.unaryExpr([](double r) { return sigmoid(r); }); }

GridInit init_grid(const AdaptedFeatures& features, const Geometry& geometry, int superpixels) {
  const Eigen::Index n = geometry.pixels();
  if (superpixels > n) {
    throw ValidationError("cannot place " + std::to_string(superpixels) + " superpixels on " + std::to_string(n) +
                          " pixels");
  }
  GridInit init;
  init.cell = near_square_tiling(geometry.height, geometry.width, superpixels).tile_map();
  init.cell_size.assign(static_cast<std::size_t>(superpixels), 0);
  init.state.centers = RowMatrix::Zero(superpixels, features.values.cols());
  init.state.center_coords = RowMatrix::Zero(superpixels, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int j = init.cell[i];
    ++init.cell_size[j];
    init.state.centers.row(j) += features.values.row(i);
    init.state.center_coords.row(j) += features.coords.row(i);
  }
  for (int j = 0; j < superpixels; ++j) {
    init.state.centers.row(j) /= init.cell_size[j];
    init.state.center_coords.row(j) /= init.cell_size[j];
  }
  return init;
}

IndexMatrix candidate_superpixels(const SuperpixelState& state, const RowMatrix& coords, int G) {
  return kernels::parallel::candidates(coords, state.center_coords, G);
}

RowMatrix compute_distances(const AdaptedFeatures& features, const SuperpixelState& state, const Vector& weights,
                            const IndexMatrix& candidates) {
  const Eigen::Index n = features.values.rows(), D = features.values.cols(), G = candidates.cols();
  RowMatrix dist(n, G);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index g = 0; g < G; ++g) {
      const int j = candidates(i, g);
      const double w = weights[j];
      const double a = kernels::detail::squared_distance(&features.values(i, 0), &state.centers(j, 0), D);
      const double b = kernels::detail::squared_distance(&features.coords(i, 0), &state.center_coords(j, 0), 2);
      dist(i, g) = w * a + (1.0 - w) * b;
    }
  }
  return dist;
}

RowMatrix soft_assign(const RowMatrix& dist, double tau) {
  if (!(tau > 0.0)) throw ValidationError("temperature tau must be > 0");
  RowMatrix probs(dist.rows(), dist.cols());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < dist.rows(); ++i) {
    kernels::detail::softmax_row(&dist(i, 0), tau, &probs(i, 0), dist.cols());
  }
  return probs;
}

SuperpixelState update_centers(const AdaptedFeatures& features, const RowMatrix& probs,
                               const IndexMatrix& candidates, int superpixels) {
  auto upd = kernels::parallel::update_centers(features.values, features.coords, probs, candidates, superpixels);
  return {std::move(upd.centers), std::move(upd.center_coords)};
}

std::vector<int> hard_labels(const RowMatrix& probs, const IndexMatrix& candidates) {
  std::vector<int> hard(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index g = 1; g < probs.cols(); ++g) {
      if (probs(i, g) > probs(i, best) || (probs(i, g) == probs(i, best) && candidates(i, g) < candidates(i, best))) {
        best = g;
      }
    }
    hard[i] = candidates(i, best);
  }
  return hard;
}

SuperpixelRun run_superpixels(const AdaptedFeatures& features, const Geometry& geometry, const Vector& weights,
                              const SuperpixelOptions& options) {
  if (options.iterations < 1) throw ValidationError("superpixel refinement needs at least one iteration");
  if (!(options.tau > 0.0)) throw ValidationError("temperature tau must be > 0");
  if (weights.size() != options.superpixels) throw ValidationError("compactness weights do not match M");

  SuperpixelRun run;
  run.init = init_grid(features, geometry, options.superpixels);
  SuperpixelState state = run.init.state;
  run.iterations.reserve(static_cast<std::size_t>(options.iterations));
  for (int t = 0; t < options.iterations; ++t) {
    Iteration it;
    it.candidates = kernels::parallel::candidates(features.coords, state.center_coords, options.candidates);
    RowMatrix dist;
    kernels::parallel::assign(features.values, features.coords, state.centers, state.center_coords, weights,
                              it.candidates, options.tau, dist, it.probs);
    it.output = kernels::parallel::update_centers(features.values, features.coords, it.probs, it.candidates,
                                                  options.superpixels);
    it.input = std::move(state);
    state = {it.output.centers, it.output.center_coords};
    run.iterations.push_back(std::move(it));
  }
  run.final_state = std::move(state);
  const Iteration& last = run.iterations.back();
  run.assignment = {last.candidates, last.probs, options.tau, hard_labels(last.probs, last.candidates)};
  return run;
}

SuperpixelGradient run_superpixels_backward(const SuperpixelRun& run, const AdaptedFeatures& features,
                                            const Vector& weights, double tau, const RowMatrix& centers_bar,
                                            const RowMatrix& probs_bar) {
  const Eigen::Index n = features.values.rows(), D = features.values.cols();
  const int m = run.final_state.count();
  SuperpixelGradient grad{RowMatrix::Zero(n, D), Vector::Zero(m)};

  RowMatrix s_bar = centers_bar;
  RowMatrix r_bar = RowMatrix::Zero(m, 2);
  for (auto it = run.iterations.rbegin(); it != run.iterations.rend(); ++it) {
    RowMatrix p_bar = (it == run.iterations.rbegin()) ? probs_bar : RowMatrix::Zero(n, it->candidates.cols());
    kernels::parallel::update_centers_backward(features.values, features.coords, it->probs, it->candidates,
                                               it->output, s_bar, r_bar, grad.features, p_bar);
    RowMatrix s_prev = RowMatrix::Zero(m, D), r_prev = RowMatrix::Zero(m, 2);
    kernels::parallel::assign_backward(features.values, features.coords, it->input.centers,
                                       it->input.center_coords, weights, it->candidates, tau, it->probs, p_bar,
                                       grad.features, s_prev, r_prev, grad.weights);
    s_bar = std::move(s_prev);
    r_bar = std::move(r_prev);
  }
  // initial centers are cell means of X'; their coordinates are constants
  for (Eigen::Index i = 0; i < n; ++i) {
    const int j = run.init.cell[i];
    grad.features.row(i) += s_bar.row(j) / run.init.cell_size[j];
  }
  return grad;
}

RowMatrix quantized_features(const SuperpixelState& state, std::span<const int> hard) {
  RowMatrix f(static_cast<Eigen::Index>(hard.size()), state.centers.cols());
  for (std::size_t i = 0; i < hard.size(); ++i) f.row(static_cast<Eigen::Index>(i)) = state.centers.row(hard[i]);
  return f;
}

namespace {

int find_root(std::vector<int>& parent, int c) {
  while (parent[c] != c) {
    parent[c] = parent[parent[c]];
    c = parent[c];
  }
  return c;
}

}  // namespace

Segmentation enforce_connectivity(std::span<const int> hard, int height, int width, int superpixels) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (hard.size() != n) throw ValidationError("label map does not match geometry");
  if (superpixels < 1) throw ValidationError("superpixel count must be positive");

  // 4-connected components in scan order
  std::vector<int> comp(n, -1);
  std::vector<int> comp_label, comp_size, comp_first;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    const int id = static_cast<int>(comp_label.size());
    comp_label.push_back(hard[start]);
    comp_first.push_back(static_cast<int>(start));
    int size = 0;
    comp[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++size;
      const int y = static_cast<int>(p / width), x = static_cast<int>(p % width);
      const std::size_t nbrs[4] = {y > 0 ? p - width : n, y + 1 < height ? p + width : n, x > 0 ? p - 1 : n,
                                   x + 1 < width ? p + 1 : n};
      for (std::size_t q : nbrs) {
        if (q < n && comp[q] < 0 && hard[q] == hard[start]) {
          comp[q] = id;
          stack.push_back(q);
        }
      }
    }
    comp_size.push_back(size);
  }
  const int ncomp = static_cast<int>(comp_label.size());

  // shared boundary lengths between adjacent components
  std::vector<std::map<int, int>> border(static_cast<std::size_t>(ncomp));
  for (std::size_t p = 0; p < n; ++p) {
    const int x = static_cast<int>(p % width);
    const std::size_t right = (x + 1 < width) ? p + 1 : n, down = p + width;
    for (std::size_t q : {right, down}) {
      if (q < n && comp[q] != comp[p]) {
        ++border[comp[p]][comp[q]];
        ++border[comp[q]][comp[p]];
      }
    }
  }

  const double min_size = static_cast<double>(n) / (4.0 * superpixels);
  std::vector<int> parent(static_cast<std::size_t>(ncomp));
  std::iota(parent.begin(), parent.end(), 0);
  for (int c = 0; c < ncomp; ++c) {
    const int r = find_root(parent, c);
    if (comp_size[r] >= min_size || border[r].empty()) continue;
    int target = -1, longest = 0;
    for (const auto& [nbr, len] : border[r]) {
      if (len > longest || (len == longest && nbr < target)) {
        longest = len;
        target = nbr;
      }
    }
    parent[r] = target;
    comp_size[target] += comp_size[r];
    border[target].erase(r);
    for (const auto& [nbr, len] : border[r]) {
      if (nbr == target) continue;
      border[target][nbr] += len;
      auto& back = border[nbr];
      back.erase(r);
      back[target] += len;
    }
    border[r].clear();
  }

  std::vector<int> roots;
  for (int c = 0; c < ncomp; ++c) {
    if (find_root(parent, c) == c) roots.push_back(c);
  }
  std::sort(roots.begin(), roots.end(), [&](int a, int b) {
    return comp_label[a] != comp_label[b] ? comp_label[a] < comp_label[b] : comp_first[a] < comp_first[b];
  });
  std::vector<int> dense(static_cast<std::size_t>(ncomp), -1);
  Segmentation seg;
  for (int r : roots) {
    dense[r] = static_cast<int>(seg.source.size());
    seg.source.push_back(comp_label[r]);
  }
  seg.labels.resize(n);
  for (std::size_t p = 0; p < n; ++p) seg.labels[p] = dense[find_root(parent, comp[p])];
  return seg;
}

}  // namespace spixel_ssc::spixel
