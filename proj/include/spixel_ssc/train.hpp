#pragma once

#include "spixel_ssc/common.hpp"
#include "spixel_ssc/hsi_data.hpp"
#include "spixel_ssc/losses.hpp"
#include "spixel_ssc/selfrep_admm.hpp"
#include "spixel_ssc/spixel_net.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spixel_ssc::train {

/// Pipeline variants: M1 no training, M2 superpixel network only, M3 unfolded
/// ADMM only, M4 both trained in two separate phases, full joint training.
enum class AblationMode { m1, m2, m3, m4, full };

std::string to_string(AblationMode mode);
AblationMode parse_ablation(const std::string& text);

struct TrainConfig {
  double alpha = 10.0;
  int epochs = 200;
  double learning_rate = 1e-3;
  double tau = 0.1;
  int superpixel_iterations = 10;
  int admm_layers = 15;
  double rho = 1.0;
  int candidates = spixel::kDefaultCandidates;
  double lambda_noise = losses::kDefaultNoiseWeight;
  double lambda_sr_init = 0.1;
  std::optional<int> superpixels;
  std::uint64_t seed = 0;
  AblationMode ablation = AblationMode::full;
  int checkpoint_every = 50;

  /// Throws ConfigError on non-positive or out-of-range values.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are ignored.
TrainConfig config_from_json(const nlohmann::json& j);

/// Trainable quantities. Also used as the gradient and optimizer-moment
/// container since the shapes are identical.
struct ParameterSet {
  RowMatrix delta;         // N×D residual added to the features
  Vector raw_compactness;  // M, w = sigmoid(raw)
  double raw_lambda_sr = 0.0;

  static ParameterSet initial(Eigen::Index pixels, int bands, int superpixels, double lambda_sr = 0.1);
  static ParameterSet zeros_like(const ParameterSet& p);

  double lambda_sr() const { return softplus(raw_lambda_sr); }
  bool all_finite() const;
};

using Gradients = ParameterSet;

struct ActiveParameters {
  bool delta = true;
  bool compactness = true;
  bool lambda_sr = true;
};

/// Multipliers on α·L_rep, L_spixel and L_noise in the optimized objective.
struct ObjectiveWeights {
  double rep = 1.0;
  double spixel = 1.0;
  double noise = 1.0;
};

struct Stage {
  ActiveParameters active;
  ObjectiveWeights weights;
};

/// Stage of an ablation mode; M4 has phase 0 (superpixel losses, δ and W)
/// and phase 1 (rep loss, λ_sr).
Stage stage_for(AblationMode mode, int phase = 0);

/// Every intermediate of one forward pass, kept for the reverse pass.
struct ForwardTrace {
  spixel::Geometry geometry;
  spixel::AdaptedFeatures features;
  Vector compactness;  // effective w
  spixel::SuperpixelRun superpixels;
  RowMatrix quantized;
  selfrep::NormalizedFeatures normalized;
  selfrep::Unfolding unfolding;
  losses::LossReport report;
  double alpha = 0.0;
  double lambda_noise = 0.0;
  double tau = 0.0;
};

/// X' = X + δ -> superpixels -> F -> Ŝ -> unfolded ADMM -> losses.
/// Throws NumericalError naming the first stage producing non-finite values.
ForwardTrace forward(const ParameterSet& params, const hsi::HsiCube& cube, const TrainConfig& config,
                     int superpixels);

/// Objective the stage optimizes, evaluated on a trace.
double objective(const ForwardTrace& trace, const ObjectiveWeights& weights);

/// Exact reverse-mode gradient of objective(trace, stage.weights). Inactive
/// parameters get exactly zero.
Gradients backward(const ForwardTrace& trace, const ParameterSet& params, const Stage& stage);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ParameterSet m;
  ParameterSet v;
  long step_delta = 0;
  long step_compactness = 0;
  long step_lambda_sr = 0;

  static AdamState for_params(const ParameterSet& p);
};

/// Bias-corrected adaptive-moment update of the active blocks only.
void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state, const AdamOptions& options,
               const ActiveParameters& active = {});

struct Checkpoint {
  int height = 0;
  int width = 0;
  int bands = 0;
  int superpixels = 0;
  int epoch = 0;
  std::string config_json;
  std::string rng_state;
  ParameterSet params;
  AdamState adam;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout (little-endian): "SPXSSCCK", u32 version, u32 reserved,
/// u64 height/width/bands/superpixels/epoch, Adam step counters (3×u64),
/// length-prefixed config JSON and RNG state, then f64 arrays: raw λ_sr,
/// raw compactness (M), δ (N·D), followed by the Adam m and v moments in the
/// same order. Written atomically; the config is echoed to `<path>.json`.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EpochRecord {
  int epoch = 0;  // number of optimizer steps taken before this evaluation
  losses::LossReport report;
};

struct TrainOutputs {
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> loss_csv;
};

struct TrainResult {
  ParameterSet params;
  AdamState adam;
  ForwardTrace final_trace;
  std::vector<EpochRecord> history;
  int superpixels = 0;
  int epochs_run = 0;
};

/// Runs the optimizer under the configured ablation mode. History row e holds
/// the losses after e steps; the final trace is the forward pass of the
/// returned parameters. Deterministic for a fixed config.
TrainResult train(const hsi::HsiCube& cube, const TrainConfig& config, int superpixels,
                  const TrainOutputs& outputs = {});

void write_loss_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace spixel_ssc::train
