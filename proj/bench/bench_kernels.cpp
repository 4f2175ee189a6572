// Serial reference vs OpenMP kernels on a 128×128×32 frame with M = 256.
#include "spixel_ssc/kernels.hpp"
#include "spixel_ssc/spixel_net.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace spixel_ssc;

struct Frame {
  spixel::Geometry geometry;
  spixel::AdaptedFeatures features;
  spixel::SuperpixelState state;
  Vector weights;
  IndexMatrix candidates;
  RowMatrix dist;
  RowMatrix probs;
  kernels::CenterUpdate update;
  RowMatrix centers_bar;
  RowMatrix coords_bar;
  RowMatrix probs_bar;
};

const Frame& frame() {
  static const Frame f = [] {
    constexpr int H = 128, W = 128, D = 32, M = 256;
    Frame f;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal;
    f.geometry = spixel::make_geometry(H, W, M);
    f.features.values = RowMatrix::NullaryExpr(H * W, D, [&] { return normal(rng); });
    f.features.coords = spixel::pixel_coords(f.geometry);
    f.state = spixel::init_grid(f.features, f.geometry, M).state;
    f.weights = Vector::Constant(M, 0.5);
    f.candidates = kernels::serial::candidates(f.features.coords, f.state.center_coords, 9);
    kernels::serial::assign(f.features.values, f.features.coords, f.state.centers, f.state.center_coords,
                            f.weights, f.candidates, 0.1, f.dist, f.probs);
    f.update = kernels::serial::update_centers(f.features.values, f.features.coords, f.probs, f.candidates, M);
    f.centers_bar = RowMatrix::NullaryExpr(M, D, [&] { return normal(rng); });
    f.coords_bar = RowMatrix::NullaryExpr(M, 2, [&] { return normal(rng); });
    f.probs_bar = RowMatrix::NullaryExpr(H * W, 9, [&] { return normal(rng); });
    return f;
  }();
  return f;
}

template <bool Parallel>
void BM_candidates(benchmark::State& state) {
  const Frame& f = frame();
  for (auto _ : state) {
    auto c = Parallel ? kernels::parallel::candidates(f.features.coords, f.state.center_coords, 9)
                      : kernels::serial::candidates(f.features.coords, f.state.center_coords, 9);
    benchmark::DoNotOptimize(c.data());
  }
}

template <bool Parallel>
void BM_assign(benchmark::State& state) {
  const Frame& f = frame();
  RowMatrix dist, probs;
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::assign(f.features.values, f.features.coords, f.state.centers, f.state.center_coords,
                                f.weights, f.candidates, 0.1, dist, probs);
    } else {
      kernels::serial::assign(f.features.values, f.features.coords, f.state.centers, f.state.center_coords,
                              f.weights, f.candidates, 0.1, dist, probs);
    }
    benchmark::DoNotOptimize(probs.data());
  }
}

template <bool Parallel>
void BM_update_centers(benchmark::State& state) {
  const Frame& f = frame();
  const int M = static_cast<int>(f.state.centers.rows());
  for (auto _ : state) {
    auto u = Parallel ? kernels::parallel::update_centers(f.features.values, f.features.coords, f.probs,
                                                          f.candidates, M)
                      : kernels::serial::update_centers(f.features.values, f.features.coords, f.probs,
                                                        f.candidates, M);
    benchmark::DoNotOptimize(u.centers.data());
  }
}

template <bool Parallel>
void BM_backward(benchmark::State& state) {
  const Frame& f = frame();
  const auto n = f.features.values.rows(), d = f.features.values.cols(), m = f.state.centers.rows();
  for (auto _ : state) {
    RowMatrix features_bar = RowMatrix::Zero(n, d), probs_bar = f.probs_bar;
    RowMatrix centers_bar = RowMatrix::Zero(m, d), coords_bar = RowMatrix::Zero(m, 2);
    Vector weights_bar = Vector::Zero(m);
    if constexpr (Parallel) {
      kernels::parallel::update_centers_backward(f.features.values, f.features.coords, f.probs, f.candidates,
                                                 f.update, f.centers_bar, f.coords_bar, features_bar, probs_bar);
      kernels::parallel::assign_backward(f.features.values, f.features.coords, f.state.centers,
                                         f.state.center_coords, f.weights, f.candidates, 0.1, f.probs, probs_bar,
                                         features_bar, centers_bar, coords_bar, weights_bar);
    } else {
      kernels::serial::update_centers_backward(f.features.values, f.features.coords, f.probs, f.candidates,
                                               f.update, f.centers_bar, f.coords_bar, features_bar, probs_bar);
      kernels::serial::assign_backward(f.features.values, f.features.coords, f.state.centers,
                                       f.state.center_coords, f.weights, f.candidates, 0.1, f.probs, probs_bar,
                                       features_bar, centers_bar, coords_bar, weights_bar);
    }
    benchmark::DoNotOptimize(features_bar.data());
  }
}

BENCHMARK(BM_candidates<false>)->Name("candidates/serial");
BENCHMARK(BM_candidates<true>)->Name("candidates/parallel");
BENCHMARK(BM_assign<false>)->Name("assign/serial");
BENCHMARK(BM_assign<true>)->Name("assign/parallel");
BENCHMARK(BM_update_centers<false>)->Name("update_centers/serial");
BENCHMARK(BM_update_centers<true>)->Name("update_centers/parallel");
BENCHMARK(BM_backward<false>)->Name("backward/serial");
BENCHMARK(BM_backward<true>)->Name("backward/parallel");

}  // namespace

BENCHMARK_MAIN();
