#include "spixel_ssc/train.hpp"

#include "spixel_ssc/io.hpp"

#include "oracles/finite_diff.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <fstream>

using namespace spixel_ssc;
using namespace spixel_ssc::train;

namespace {

hsi::HsiCube small_cube(int h, int w, int d, std::uint64_t seed) {
  hsi::SynthSpec spec;
  spec.height = h;
  spec.width = w;
  spec.bands = d;
  spec.classes = 2;
  spec.subspace_dim = std::min(2, d - 1);
  spec.seed = seed;
  return hsi::standardize(hsi::make_synthetic(spec).first);
}

TrainConfig small_config() {
  TrainConfig c;
  c.superpixel_iterations = 3;
  c.admm_layers = 5;
  c.tau = 0.5;
  c.candidates = 4;
  c.alpha = 2.0;
  c.lambda_noise = 5.0;
  return c;
}

ParameterSet perturbed_params(const hsi::HsiCube& cube, int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParameterSet p = ParameterSet::initial(cube.pixels(), cube.bands, m, 0.1);
  p.delta = testing::random_matrix(cube.pixels(), cube.bands, rng, 0.05);
  p.raw_compactness = testing::random_matrix(m, 1, rng, 0.5);
  p.raw_lambda_sr += 0.2;
  return p;
}

struct GradientCheck {
  double delta, compactness, lambda;
};

GradientCheck check_gradient(const Stage& stage, std::uint64_t seed) {
  const auto cube = small_cube(8, 8, 3, seed);
  const auto config = small_config();
  ParameterSet p = perturbed_params(cube, 4, seed);
  auto loss = [&] { return objective(forward(p, cube, config, 4), stage.weights); };
  const auto g = backward(forward(p, cube, config, 4), p, stage);
  GradientCheck r{};
  r.delta = oracle::relative_error(Matrix(g.delta), oracle::central_difference(p.delta, loss, 1e-6));
  r.compactness = oracle::relative_error(Matrix(g.raw_compactness),
                                         oracle::central_difference(p.raw_compactness, loss, 1e-6));
  r.lambda = oracle::relative_error(g.raw_lambda_sr, oracle::central_difference(p.raw_lambda_sr, loss, 1e-6));
  return r;
}

}  // namespace

TEST_CASE("ablation names parse and print") {
  for (auto mode : {AblationMode::m1, AblationMode::m2, AblationMode::m3, AblationMode::m4, AblationMode::full}) {
    CHECK(parse_ablation(to_string(mode)) == mode);
  }
  CHECK(parse_ablation("m3") == AblationMode::m3);
  CHECK_THROWS_AS(parse_ablation("M5"), ConfigError);
}

TEST_CASE("stage table") {
  const auto m1 = stage_for(AblationMode::m1);
  CHECK_FALSE((m1.active.delta || m1.active.compactness || m1.active.lambda_sr));
  const auto m2 = stage_for(AblationMode::m2);
  CHECK((m2.active.delta && m2.active.compactness && !m2.active.lambda_sr));
  CHECK(m2.weights.rep == 0.0);
  const auto m3 = stage_for(AblationMode::m3);
  CHECK((!m3.active.delta && !m3.active.compactness && m3.active.lambda_sr));
  CHECK(stage_for(AblationMode::m4, 0).active.delta);
  CHECK(stage_for(AblationMode::m4, 1).active.lambda_sr);
  CHECK_FALSE(stage_for(AblationMode::m4, 1).active.delta);
}

TEST_CASE("config JSON round-trips and rejects bad values") {
  TrainConfig c;
  c.alpha = 3.5;
  c.epochs = 17;
  c.superpixels = 42;
  c.ablation = AblationMode::m4;
  c.seed = 99;
  const auto back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK_FALSE(config_from_json(nlohmann::json{{"M", "auto"}}).superpixels.has_value());
  CHECK(config_from_json(nlohmann::json{{"T", 4}, {"K", 8}}).admm_layers == 8);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"alpha", "ten"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"superpixels", "many"}}), ConfigError);
  TrainConfig bad;
  bad.tau = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.admm_layers = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("full backward pass matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 2; ++seed) {
    const auto r = check_gradient(stage_for(AblationMode::full), seed);
    CHECK(r.delta <= 1e-4);
    CHECK(r.compactness <= 1e-4);
    CHECK(r.lambda <= 1e-4);
  }
}

TEST_CASE("staged objectives have matching gradients") {
  const auto m2 = check_gradient(stage_for(AblationMode::m2), 3);
  CHECK(m2.delta <= 1e-4);
  CHECK(m2.compactness <= 1e-4);
  const auto m3 = check_gradient(stage_for(AblationMode::m3), 3);
  CHECK(m3.lambda <= 1e-4);
}

TEST_CASE("inactive parameters receive exactly zero gradient") {
  const auto cube = small_cube(8, 8, 3, 4);
  const auto config = small_config();
  const ParameterSet p = perturbed_params(cube, 4, 4);
  const auto trace = forward(p, cube, config, 4);
  const auto m1 = backward(trace, p, stage_for(AblationMode::m1));
  CHECK(m1.delta.isZero(0.0));
  CHECK(m1.raw_compactness.isZero(0.0));
  CHECK(m1.raw_lambda_sr == 0.0);
  const auto m3 = backward(trace, p, stage_for(AblationMode::m3));
  CHECK(m3.delta.isZero(0.0));
  CHECK(m3.raw_compactness.isZero(0.0));
  CHECK(m3.raw_lambda_sr != 0.0);
  const auto m2 = backward(trace, p, stage_for(AblationMode::m2));
  CHECK(m2.raw_lambda_sr == 0.0);
}

TEST_CASE("alpha 0 removes the gradient on lambda") {
  const auto cube = small_cube(8, 8, 3, 5);
  auto config = small_config();
  config.alpha = 0.0;
  const ParameterSet p = perturbed_params(cube, 4, 5);
  const auto g = backward(forward(p, cube, config, 4), p, stage_for(AblationMode::full));
  CHECK(g.raw_lambda_sr == 0.0);
}

TEST_CASE("Adam first step moves by the learning rate against the gradient sign") {
  ParameterSet p;
  p.delta = RowMatrix::Zero(1, 2);
  p.raw_compactness = Vector::Zero(1);
  p.raw_lambda_sr = 0.0;
  auto state = AdamState::for_params(p);
  Gradients g = ParameterSet::zeros_like(p);
  g.delta << 2.0, -0.5;
  g.raw_compactness << 1e-3;
  g.raw_lambda_sr = 4.0;
  adam_step(p, g, state, {0.01});
  // m̂ = g and v̂ = g², so the step is lr·g/(|g| + ε)
  CHECK(p.delta(0, 0) == doctest::Approx(-0.01 * 2.0 / (2.0 + 1e-8)).epsilon(1e-12));
  CHECK(p.delta(0, 1) == doctest::Approx(0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(p.raw_compactness[0] == doctest::Approx(-0.01 * 1e-3 / (1e-3 + 1e-8)).epsilon(1e-12));
  CHECK(p.raw_lambda_sr == doctest::Approx(-0.01).epsilon(1e-9));

  // second step with g = −1 on λ: m = 0.9·0.4 − 0.1 = 0.26, v = 0.999·0.016 + 0.001 = 0.016984
  g.raw_lambda_sr = -1.0;
  adam_step(p, g, state, {0.01}, {false, false, true});
  const double m_hat = 0.26 / (1 - 0.81), v_hat = 0.016984 / (1 - 0.999 * 0.999);
  CHECK(p.raw_lambda_sr == doctest::Approx(-0.01 - 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-9));
  CHECK(state.step_lambda_sr == 2);
  CHECK(state.step_delta == 1);
}

TEST_CASE("Adam: zero gradient is a no-op, constant gradient steps by the learning rate") {
  ParameterSet p;
  p.delta = RowMatrix::Constant(2, 2, 0.3);
  p.raw_compactness = Vector::Constant(3, -0.2);
  p.raw_lambda_sr = 1.0;
  const ParameterSet start = p;
  auto state = AdamState::for_params(p);
  adam_step(p, ParameterSet::zeros_like(p), state, {0.05});
  CHECK(p.delta == start.delta);
  CHECK(p.raw_compactness == start.raw_compactness);
  CHECK(p.raw_lambda_sr == start.raw_lambda_sr);

  ParameterSet q = start;
  auto fresh = AdamState::for_params(q);
  Gradients g = ParameterSet::zeros_like(q);
  g.raw_lambda_sr = 0.7;
  for (int k = 1; k <= 20; ++k) {
    const double before = q.raw_lambda_sr;
    adam_step(q, g, fresh, {0.05});
    CHECK(before - q.raw_lambda_sr == doctest::Approx(0.05).epsilon(1e-6));
  }
}

TEST_CASE("inactive blocks are left alone by the optimizer") {
  ParameterSet p;
  p.delta = RowMatrix::Zero(2, 2);
  p.raw_compactness = Vector::Zero(2);
  auto state = AdamState::for_params(p);
  Gradients g = ParameterSet::zeros_like(p);
  g.delta.setOnes();
  g.raw_compactness.setOnes();
  g.raw_lambda_sr = 1.0;
  adam_step(p, g, state, {0.1}, {false, false, true});
  CHECK(p.delta.isZero(0.0));
  CHECK(p.raw_compactness.isZero(0.0));
  CHECK(state.step_delta == 0);
  CHECK(state.m.delta.isZero(0.0));
}

TEST_CASE("M3 training changes only lambda") {
  const auto cube = small_cube(12, 12, 4, 6);
  auto config = small_config();
  config.epochs = 5;
  config.ablation = AblationMode::m3;
  const auto r = train::train(cube, config, 9);
  CHECK(r.params.delta.isZero(0.0));
  CHECK(r.params.raw_compactness.isZero(0.0));
  CHECK(r.params.raw_lambda_sr != ParameterSet::initial(1, 1, 1, config.lambda_sr_init).raw_lambda_sr);
  CHECK(r.epochs_run == 5);
}

TEST_CASE("M1 takes no optimizer steps") {
  const auto cube = small_cube(12, 12, 4, 6);
  auto config = small_config();
  config.epochs = 5;
  config.ablation = AblationMode::m1;
  const auto r = train::train(cube, config, 9);
  CHECK(r.epochs_run == 0);
  CHECK(r.history.size() == 1u);
  CHECK(r.params.delta.isZero(0.0));
}

TEST_CASE("M4 splits the epochs between its two phases") {
  const auto cube = small_cube(12, 12, 4, 7);
  auto config = small_config();
  config.epochs = 5;
  config.ablation = AblationMode::m4;
  const auto r = train::train(cube, config, 9);
  CHECK(r.adam.step_delta == 2);
  CHECK(r.adam.step_compactness == 2);
  CHECK(r.adam.step_lambda_sr == 3);
}

TEST_CASE("training is deterministic") {
  const auto cube = small_cube(12, 12, 4, 8);
  auto config = small_config();
  config.epochs = 4;
  const auto a = train::train(cube, config, 9);
  const auto b = train::train(cube, config, 9);
  CHECK(a.params.delta == b.params.delta);
  CHECK(a.params.raw_compactness == b.params.raw_compactness);
  CHECK(a.params.raw_lambda_sr == b.params.raw_lambda_sr);
  CHECK(a.final_trace.unfolding.state().z == b.final_trace.unfolding.state().z);
}

TEST_CASE("total loss after 50 epochs is no higher than at the start") {
  const auto cube = small_cube(16, 16, 6, 9);
  TrainConfig config;
  config.epochs = 50;
  const auto r = train::train(cube, config, 16);
  REQUIRE(r.history.size() == 51u);
  CHECK(r.history[50].report.total <= r.history[0].report.total);
}

TEST_CASE("checkpoint and loss CSV outputs") {
  testing::TempDir dir;
  const auto cube = small_cube(10, 10, 3, 10);
  auto config = small_config();
  config.epochs = 3;
  const auto ckpt = dir / "ck.bin";
  const auto csv = dir / "losses.csv";
  const auto r = train::train(cube, config, 4, {ckpt, csv});

  const auto loaded = load_checkpoint(ckpt);
  CHECK(loaded.epoch == 3);
  CHECK(loaded.superpixels == 4);
  CHECK(loaded.params.delta == r.params.delta);
  CHECK(loaded.params.raw_lambda_sr == r.params.raw_lambda_sr);
  CHECK(loaded.adam.v.raw_compactness == r.adam.v.raw_compactness);
  CHECK(loaded.adam.step_delta == 3);
  CHECK(nlohmann::json::parse(loaded.config_json) == to_json(config));
  CHECK(std::filesystem::exists(dir / "ck.bin.json"));

  save_checkpoint(loaded, dir / "again.bin");
  CHECK(testing::file_bytes(ckpt) == testing::file_bytes(dir / "again.bin"));

  auto bytes = io::read_bytes(ckpt);
  bytes.pop_back();
  io::write_bytes_atomic(dir / "short.bin", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "short.bin"), IoError);
  bytes.push_back(0);
  bytes.push_back(0);
  io::write_bytes_atomic(dir / "long.bin", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "long.bin"), IoError);
  bytes[0] = 'X';
  io::write_bytes_atomic(dir / "magic.bin", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.bin"), IoError);

  std::ifstream in(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 5u);
  CHECK(lines[0] == "epoch,spixel_compact,spixel_consistency,recon,l1,entropy,noise,rep,total");
  CHECK(lines[1].rfind("0,", 0) == 0);
  CHECK(lines[4].rfind("3,", 0) == 0);
}

TEST_CASE("forward rejects mismatched parameter shapes") {
  const auto cube = small_cube(8, 8, 3, 11);
  const auto config = small_config();
  CHECK_THROWS_AS(forward(ParameterSet::initial(63, 3, 4), cube, config, 4), ValidationError);
  CHECK_THROWS_AS(forward(ParameterSet::initial(64, 3, 5), cube, config, 4), ValidationError);
}

TEST_CASE("non-finite input is reported as a numerical error") {
  auto cube = small_cube(8, 8, 3, 12);
  cube.values(5, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward(ParameterSet::initial(64, 3, 4), cube, small_config(), 4), NumericalError);
}
