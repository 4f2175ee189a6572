#include "spixel_ssc/train.hpp"

#include "spixel_ssc/io.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>
#include <sstream>

namespace spixel_ssc::train {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::m1: return "M1";
    case AblationMode::m2: return "M2";
    case AblationMode::m3: return "M3";
    case AblationMode::m4: return "M4";
    case AblationMode::full: return "full";
  }
  return "full";
}

AblationMode parse_ablation(const std::string& text) {
  if (text == "M1" || text == "m1") return AblationMode::m1;
  if (text == "M2" || text == "m2") return AblationMode::m2;
  if (text == "M3" || text == "m3") return AblationMode::m3;
  if (text == "M4" || text == "m4") return AblationMode::m4;
  if (text == "full") return AblationMode::full;
  throw ConfigError("unknown ablation mode '" + text + "' (expected M1, M2, M3, M4 or full)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid config: " + what); };
  if (!(alpha >= 0.0)) fail("alpha must be >= 0");
  if (epochs < 0) fail("epochs must be >= 0");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(tau > 0.0)) fail("tau must be > 0");
  if (superpixel_iterations < 1) fail("superpixel_iterations must be >= 1");
  if (admm_layers < 1) fail("admm_layers must be >= 1");
  if (!(rho > 0.0)) fail("rho must be > 0");
  if (candidates < 1) fail("candidates must be >= 1");
  if (!(lambda_noise >= 0.0)) fail("lambda_noise must be >= 0");
  if (!(lambda_sr_init > 0.0)) fail("lambda_sr_init must be > 0");
  if (superpixels && *superpixels < 1) fail("superpixels must be >= 1");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
}

json to_json(const TrainConfig& c) {
  return {{"alpha", c.alpha},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"tau", c.tau},
          {"superpixel_iterations", c.superpixel_iterations},
          {"admm_layers", c.admm_layers},
          {"rho", c.rho},
          {"candidates", c.candidates},
          {"lambda_noise", c.lambda_noise},
          {"lambda_sr_init", c.lambda_sr_init},
          {"superpixels", c.superpixels ? json(*c.superpixels) : json("auto")},
          {"seed", c.seed},
          {"ablation", to_string(c.ablation)},
          {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  try {
    auto take = [&j](const char* key, auto& field) {
      if (j.contains(key) && !j[key].is_null()) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    take("alpha", c.alpha);
    take("epochs", c.epochs);
    take("learning_rate", c.learning_rate);
    take("tau", c.tau);
    take("T", c.superpixel_iterations);
    take("superpixel_iterations", c.superpixel_iterations);
    take("K", c.admm_layers);
    take("admm_layers", c.admm_layers);
    take("rho", c.rho);
    take("candidates", c.candidates);
    take("lambda_noise", c.lambda_noise);
    take("lambda_sr_init", c.lambda_sr_init);
    take("seed", c.seed);
    take("checkpoint_every", c.checkpoint_every);
    const char* m_key = j.contains("superpixels") ? "superpixels" : "M";
    if (j.contains(m_key) && !j[m_key].is_null()) {
      if (j[m_key].is_string()) {
        if (j[m_key] != "auto") throw ConfigError("superpixels must be an integer or \"auto\"");
      } else {
        c.superpixels = j[m_key].get<int>();
      }
    }
    if (j.contains("ablation")) c.ablation = parse_ablation(j["ablation"].get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  return c;
}

ParameterSet ParameterSet::initial(Eigen::Index pixels, int bands, int superpixels, double lambda_sr) {
  return {RowMatrix::Zero(pixels, bands), Vector::Zero(superpixels), softplus_inverse(lambda_sr)};
}

ParameterSet ParameterSet::zeros_like(const ParameterSet& p) {
  return {RowMatrix::Zero(p.delta.rows(), p.delta.cols()), Vector::Zero(p.raw_compactness.size()), 0.0};
}

bool ParameterSet::all_finite() const {
  return delta.allFinite() && raw_compactness.allFinite() && std::isfinite(raw_lambda_sr);
}

Stage stage_for(AblationMode mode, int phase) {
  switch (mode) {
    case AblationMode::m1:
      return {{false, false, false}, {0.0, 0.0, 0.0}};
    case AblationMode::m2:
      return {{true, true, false}, {0.0, 1.0, 1.0}};
    case AblationMode::m3:
      return {{false, false, true}, {1.0, 0.0, 0.0}};
    case AblationMode::m4:
      return stage_for(phase == 0 ? AblationMode::m2 : AblationMode::m3);
    case AblationMode::full:
      break;
  }
  return {{true, true, true}, {1.0, 1.0, 1.0}};
}

namespace {

void require_finite(bool ok, const char* stage) {
  if (!ok) throw NumericalError(std::string("non-finite values produced in stage '") + stage + "'");
}

}  // namespace

ForwardTrace forward(const ParameterSet& params, const hsi::HsiCube& cube, const TrainConfig& config,
                     int superpixels) {
  const Eigen::Index n = cube.pixels();
  if (params.delta.rows() != n || params.delta.cols() != cube.bands) {
    throw ValidationError("residual shape does not match the cube");
  }
  if (params.raw_compactness.size() != superpixels) throw ValidationError("compactness vector does not match M");

  ForwardTrace t;
  t.alpha = config.alpha;
  t.lambda_noise = config.lambda_noise;
  t.tau = config.tau;
  t.geometry = spixel::make_geometry(cube.height, cube.width, superpixels);
  t.features.values = cube.values + params.delta;
  t.features.coords = spixel::pixel_coords(t.geometry);
  require_finite(t.features.values.allFinite(), "adapted features");

  t.compactness = spixel::CompactnessWeights{params.raw_compactness}.effective();
  t.superpixels = spixel::run_superpixels(
      t.features, t.geometry, t.compactness,
      {superpixels, config.superpixel_iterations, config.tau, config.candidates});
  require_finite(t.superpixels.final_state.centers.allFinite() && t.superpixels.assignment.probs.allFinite(),
                 "superpixels");
  t.quantized = spixel::quantized_features(t.superpixels.final_state, t.superpixels.assignment.hard);

  t.normalized = selfrep::normalize_features(t.superpixels.final_state.centers);
  t.unfolding = selfrep::unfold_forward(t.normalized.shat, config.admm_layers, config.rho, params.lambda_sr());
  require_finite(t.unfolding.state().z.allFinite() && t.unfolding.state().c.allFinite(), "self-representation");

  const Matrix& z = t.unfolding.state().z;
  const auto& assign = t.superpixels.assignment;
  const auto spix = losses::spixel_loss(t.features.values, t.quantized, assign.probs, assign.candidates,
                                        cube.height, cube.width);
  losses::LossReport parts;
  parts.spixel_compact = spix.compact;
  parts.spixel_consistency = spix.consistency;
  parts.recon = losses::recon_loss(t.normalized.shat, z);
  parts.l1 = losses::l1_loss(z);
  parts.entropy = losses::entropy_loss(z);
  parts.noise = losses::noise_loss(params.delta, config.lambda_noise);
  t.report = losses::compose(parts, config.alpha);
  require_finite(std::isfinite(t.report.total), "losses");
  return t;
}

double objective(const ForwardTrace& trace, const ObjectiveWeights& w) {
  const auto& r = trace.report;
  return w.rep * trace.alpha * r.rep + w.spixel * (r.spixel_compact + r.spixel_consistency) + w.noise * r.noise;
}

Gradients backward(const ForwardTrace& t, const ParameterSet& params, const Stage& stage) {
  Gradients g = ParameterSet::zeros_like(params);
  const ActiveParameters& active = stage.active;
  if (!active.delta && !active.compactness && !active.lambda_sr) return g;

  const double w_rep = stage.weights.rep * t.alpha;
  const Matrix& shat = t.normalized.shat;
  const Matrix& z = t.unfolding.state().z;
  const Eigen::Index m = shat.cols();

  // self-representation branch: L_rep = 2·recon + l1 + entropy
  Matrix shat_bar = Matrix::Zero(shat.rows(), m);
  if (w_rep != 0.0) {
    Matrix z_bar = Matrix::Zero(m, m);
    losses::recon_loss_backward(shat, z, 2.0 * w_rep, shat_bar, z_bar);
    losses::l1_loss_backward(z, w_rep, z_bar);
    losses::entropy_loss_backward(z, w_rep, z_bar);
    const auto ug = selfrep::unfold_backward(t.unfolding, shat, z_bar);
    shat_bar += ug.shat;
    // d softplus(raw)/d raw = sigmoid(raw)
    if (active.lambda_sr) g.raw_lambda_sr = ug.lambda_sr * sigmoid(params.raw_lambda_sr);
  }

  if (active.delta || active.compactness) {
    const auto& assign = t.superpixels.assignment;
    const Eigen::Index n = t.features.values.rows(), d = t.features.values.cols();
    RowMatrix centers_bar = selfrep::normalize_features_backward(t.normalized, shat_bar);
    RowMatrix features_bar = RowMatrix::Zero(n, d);
    RowMatrix quantized_bar = RowMatrix::Zero(n, d);
    RowMatrix probs_bar = RowMatrix::Zero(n, assign.probs.cols());
    losses::spixel_loss_backward(t.features.values, t.quantized, assign.probs, assign.candidates,
                                 t.geometry.height, t.geometry.width, stage.weights.spixel, stage.weights.spixel,
                                 features_bar, quantized_bar, probs_bar);
    for (Eigen::Index i = 0; i < n; ++i) centers_bar.row(assign.hard[i]) += quantized_bar.row(i);

    const auto sg = spixel::run_superpixels_backward(t.superpixels, t.features, t.compactness, t.tau,
                                                     centers_bar, probs_bar);
    if (active.delta) {
      g.delta = features_bar + sg.features;
      losses::noise_loss_backward(params.delta, t.lambda_noise, stage.weights.noise, g.delta);
    }
    if (active.compactness) {
      g.raw_compactness = sg.weights.cwiseProduct(t.compactness.cwiseProduct((1.0 - t.compactness.array()).matrix()));
    }
  }
  return g;
}

AdamState AdamState::for_params(const ParameterSet& p) {
  return {ParameterSet::zeros_like(p), ParameterSet::zeros_like(p), 0, 0, 0};
}

namespace {

template <typename Param, typename Grad, typename Moment>
void adam_block(Param& p, const Grad& g, Moment& m, Moment& v, long step, const AdamOptions& o) {
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  m = o.beta1 * m + (1.0 - o.beta1) * g;
  v = o.beta2 * v + (1.0 - o.beta2) * g * g;
  p -= o.learning_rate * (m / c1) / (std::sqrt(v / c2) + o.epsilon);
}

}  // namespace

void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state, const AdamOptions& options,
               const ActiveParameters& active) {
  if (active.delta) {
    ++state.step_delta;
    auto p = params.delta.array();
    auto m = state.m.delta.array();
    auto v = state.v.delta.array();
    const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step_delta));
    const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step_delta));
    m = options.beta1 * m + (1.0 - options.beta1) * grads.delta.array();
    v = options.beta2 * v + (1.0 - options.beta2) * grads.delta.array().square();
    p -= options.learning_rate * (m / c1) / ((v / c2).sqrt() + options.epsilon);
  }
  if (active.compactness) {
    ++state.step_compactness;
    auto p = params.raw_compactness.array();
    auto m = state.m.raw_compactness.array();
    auto v = state.v.raw_compactness.array();
    const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step_compactness));
    const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step_compactness));
    m = options.beta1 * m + (1.0 - options.beta1) * grads.raw_compactness.array();
    v = options.beta2 * v + (1.0 - options.beta2) * grads.raw_compactness.array().square();
    p -= options.learning_rate * (m / c1) / ((v / c2).sqrt() + options.epsilon);
  }
  if (active.lambda_sr) {
    ++state.step_lambda_sr;
    adam_block(params.raw_lambda_sr, grads.raw_lambda_sr, state.m.raw_lambda_sr, state.v.raw_lambda_sr,
               state.step_lambda_sr, options);
  }
}

namespace {

constexpr char kMagic[8] = {'S', 'P', 'X', 'S', 'S', 'C', 'C', 'K'};

void put_doubles(std::vector<std::uint8_t>& out, const double* data, Eigen::Index count) {
  for (Eigen::Index k = 0; k < count; ++k) io::put_le(out, data[k]);
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  io::put_le<std::uint64_t>(out, s.size());
  out.insert(out.end(), s.begin(), s.end());
}

void put_params(std::vector<std::uint8_t>& out, const ParameterSet& p) {
  io::put_le(out, p.raw_lambda_sr);
  put_doubles(out, p.raw_compactness.data(), p.raw_compactness.size());
  put_doubles(out, p.delta.data(), p.delta.size());
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, const fs::path& path) : bytes_(bytes), path_(path) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    const T v = io::get_le<T>(bytes_.data() + pos_);
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto len = get<std::uint64_t>();
    need(len);
    std::string s(bytes_.begin() + static_cast<long>(pos_), bytes_.begin() + static_cast<long>(pos_ + len));
    pos_ += len;
    return s;
  }
  void get_doubles(double* dst, Eigen::Index count) {
    for (Eigen::Index k = 0; k < count; ++k) dst[k] = get<double>();
  }
  void get_params(ParameterSet& p) {
    p.raw_lambda_sr = get<double>();
    get_doubles(p.raw_compactness.data(), p.raw_compactness.size());
    get_doubles(p.delta.data(), p.delta.size());
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("truncated checkpoint " + path_.string());
  }
  const std::vector<std::uint8_t>& bytes_;
  fs::path path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& c, const fs::path& path) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  io::put_le<std::uint32_t>(out, kCheckpointVersion);
  io::put_le<std::uint32_t>(out, 0);
  for (int v : {c.height, c.width, c.bands, c.superpixels, c.epoch}) io::put_le<std::uint64_t>(out, v);
  for (long v : {c.adam.step_delta, c.adam.step_compactness, c.adam.step_lambda_sr}) {
    io::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(v));
  }
  put_string(out, c.config_json);
  put_string(out, c.rng_state);
  put_params(out, c.params);
  put_params(out, c.adam.m);
  put_params(out, c.adam.v);
  io::write_bytes_atomic(path, out);

  fs::path echo = path;
  echo += ".json";
  io::write_text_atomic(echo, c.config_json + "\n");
}

Checkpoint load_checkpoint(const fs::path& path) {
  const auto bytes = io::read_bytes(path);
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw IoError(path.string() + " is not a checkpoint file");
  }
  std::vector<std::uint8_t> body(bytes.begin() + sizeof kMagic, bytes.end());
  Reader r(body, path);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  }
  r.get<std::uint32_t>();
  Checkpoint c;
  c.height = static_cast<int>(r.get<std::uint64_t>());
  c.width = static_cast<int>(r.get<std::uint64_t>());
  c.bands = static_cast<int>(r.get<std::uint64_t>());
  c.superpixels = static_cast<int>(r.get<std::uint64_t>());
  c.epoch = static_cast<int>(r.get<std::uint64_t>());
  c.adam.step_delta = static_cast<long>(r.get<std::uint64_t>());
  c.adam.step_compactness = static_cast<long>(r.get<std::uint64_t>());
  c.adam.step_lambda_sr = static_cast<long>(r.get<std::uint64_t>());
  c.config_json = r.get_string();
  c.rng_state = r.get_string();
  const Eigen::Index n = static_cast<Eigen::Index>(c.height) * c.width;
  c.params = ParameterSet::initial(n, c.bands, c.superpixels);
  c.adam.m = ParameterSet::zeros_like(c.params);
  c.adam.v = ParameterSet::zeros_like(c.params);
  r.get_params(c.params);
  r.get_params(c.adam.m);
  r.get_params(c.adam.v);
  if (!r.done()) throw IoError("trailing bytes in checkpoint " + path.string());
  return c;
}

void write_loss_csv(const std::vector<EpochRecord>& history, const fs::path& path) {
  std::string text = "epoch,spixel_compact,spixel_consistency,recon,l1,entropy,noise,rep,total\n";
  char buf[64];
  for (const auto& row : history) {
    text += std::to_string(row.epoch);
    const auto& r = row.report;
    for (double v : {r.spixel_compact, r.spixel_consistency, r.recon, r.l1, r.entropy, r.noise, r.rep, r.total}) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      text += buf;
    }
    text += '\n';
  }
  io::write_text_atomic(path, text);
}

TrainResult train(const hsi::HsiCube& cube, const TrainConfig& config, int superpixels,
                  const TrainOutputs& outputs) {
  config.validate();
  TrainResult res;
  res.superpixels = superpixels;
  res.params = ParameterSet::initial(cube.pixels(), cube.bands, superpixels, config.lambda_sr_init);
  res.adam = AdamState::for_params(res.params);
  std::mt19937_64 rng(config.seed);

  std::vector<std::pair<Stage, int>> phases;
  switch (config.ablation) {
    case AblationMode::m1:
      break;
    case AblationMode::m4:
      phases.emplace_back(stage_for(AblationMode::m4, 0), config.epochs / 2);
      phases.emplace_back(stage_for(AblationMode::m4, 1), config.epochs - config.epochs / 2);
      break;
    default:
      phases.emplace_back(stage_for(config.ablation), config.epochs);
  }

  auto checkpoint = [&](int epoch) {
    if (!outputs.checkpoint) return;
    std::ostringstream rng_state;
    rng_state << rng;
    save_checkpoint({cube.height, cube.width, cube.bands, superpixels, epoch, to_json(config).dump(),
                     rng_state.str(), res.params, res.adam},
                    *outputs.checkpoint);
  };

  const AdamOptions adam{config.learning_rate};
  int epoch = 0;
  for (const auto& [stage, count] : phases) {
    for (int e = 0; e < count; ++e) {
      const ForwardTrace trace = forward(res.params, cube, config, superpixels);
      res.history.push_back({epoch, trace.report});
      const Gradients grads = backward(trace, res.params, stage);
      if (!grads.all_finite()) throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch + 1));
      adam_step(res.params, grads, res.adam, adam, stage.active);
      if (!res.params.all_finite()) {
        throw NumericalError("non-finite parameters after epoch " + std::to_string(epoch + 1));
      }
      ++epoch;
      if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) checkpoint(epoch);
      spdlog::debug("epoch {} total {:.6g}", epoch, trace.report.total);
    }
  }
  res.epochs_run = epoch;
  res.final_trace = forward(res.params, cube, config, superpixels);
  res.history.push_back({epoch, res.final_trace.report});
  checkpoint(epoch);
  if (outputs.loss_csv) write_loss_csv(res.history, *outputs.loss_csv);
  return res;
}

}  // namespace spixel_ssc::train
