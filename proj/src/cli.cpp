#include "spixel_ssc/cli.hpp"

#include "spixel_ssc/hsi_data.hpp"
#include "spixel_ssc/io.hpp"
#include "spixel_ssc/pipeline.hpp"
#include "spixel_ssc/selfrep_admm.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <regex>

namespace spixel_ssc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SynthArgs {
  std::string size = "64x64";
  int bands = 20;
  int classes = 0;
  int subspace_dim = 3;
  double noise = 0.05;
  std::string layout = "blocks";
  std::uint64_t seed = 0;
  std::string out = "synthetic";
};

struct RunArgs {
  std::string config;
  std::optional<std::string> ablation;
  std::optional<int> superpixels;
  std::optional<std::string> output;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

struct EvalArgs {
  std::string pred;
  std::string gt;
};

struct RenderArgs {
  std::string labels;
  std::string out;
  std::uint64_t seed = 0;
};

std::pair<int, int> parse_size(const std::string& text) {
  static const std::regex pattern(R"((\d+)[xX](\d+))");
  std::smatch m;
  if (!std::regex_match(text, m, pattern)) throw ConfigError("--size must look like HxW, got '" + text + "'");
  return {std::stoi(m[1]), std::stoi(m[2])};
}

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  hsi::SynthSpec spec;
  std::tie(spec.height, spec.width) = parse_size(a.size);
  spec.bands = a.bands;
  spec.classes = a.classes;
  spec.subspace_dim = a.subspace_dim;
  spec.noise_sigma = a.noise;
  spec.seed = a.seed;
  if (a.layout == "blocks") {
    spec.region_layout = hsi::RegionLayout::blocks;
  } else if (a.layout == "voronoi") {
    spec.region_layout = hsi::RegionLayout::voronoi;
  } else {
    throw ConfigError("--layout must be blocks or voronoi");
  }
  const auto [cube, labels] = hsi::make_synthetic(spec);
  const fs::path cube_path = a.out + ".hsi.json";
  const fs::path label_path = a.out + ".lbl.json";
  if (cube_path.has_parent_path()) fs::create_directories(cube_path.parent_path());
  hsi::save_cube(cube, cube_path);
  hsi::save_labels(labels, label_path);
  out << cube_path.string() << '\n' << label_path.string() << '\n';
}

fs::path resolve(const fs::path& base, const std::string& value) {
  const fs::path p(value);
  return p.is_absolute() ? p : base / p;
}

hsi::LabelMap to_label_map(std::span<const int> labels, int height, int width) {
  hsi::LabelMap map;
  map.height = height;
  map.width = width;
  map.labels.reserve(labels.size());
  for (int l : labels) {
    if (l < 0 || l > std::numeric_limits<std::uint16_t>::max()) {
      throw ValidationError("label " + std::to_string(l) + " does not fit in 16 bits");
    }
    map.labels.push_back(static_cast<std::uint16_t>(l));
  }
  return map;
}

void write_label_outputs(const hsi::LabelMap& map, const fs::path& dir, const std::string& stem,
                         std::uint64_t seed) {
  hsi::save_labels(map, dir / (stem + ".lbl.json"));
  io::write_label_ppm(dir / (stem + ".ppm"), map.labels, map.height, map.width, seed);
}

void cmd_run(const RunArgs& a, std::ostream& out) {
  const fs::path config_path(a.config);
  json cfg;
  try {
    cfg = json::parse(io::read_text(config_path));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + config_path.string() + ": " + e.what());
  }
  if (!cfg.is_object()) throw ConfigError("config must be a JSON object");

  train::TrainConfig config = train::config_from_json(cfg);
  if (a.ablation) config.ablation = train::parse_ablation(*a.ablation);
  if (a.superpixels) config.superpixels = *a.superpixels;
  if (a.epochs) config.epochs = *a.epochs;
  if (a.seed) config.seed = *a.seed;
  config.validate();

  const fs::path base = config_path.parent_path();
  auto text_field = [&cfg](const char* key) -> std::optional<std::string> {
    if (!cfg.contains(key) || cfg[key].is_null()) return std::nullopt;
    if (!cfg[key].is_string()) throw ConfigError(std::string("config key '") + key + "' must be a string");
    return cfg[key].get<std::string>();
  };
  const auto cube_field = text_field("cube");
  if (!cube_field) throw ConfigError("config is missing the 'cube' path");
  const fs::path cube_path = resolve(base, *cube_field);
  const auto label_field = text_field("labels");
  const std::optional<fs::path> label_path =
      label_field ? std::optional<fs::path>(resolve(base, *label_field)) : std::nullopt;
  std::optional<fs::path> output_dir;
  if (a.output) {
    output_dir = fs::path(*a.output);
  } else if (const auto o = text_field("output")) {
    output_dir = resolve(base, *o);
  }
  if (!output_dir) throw ConfigError("no output directory (set 'output' in the config or pass --output)");
  const bool connectivity = cfg.value("connectivity", true);

  if (fs::exists(*output_dir) && !a.force) {
    throw ConfigError("output directory " + output_dir->string() + " exists (use --force to overwrite)");
  }

  const hsi::HsiCube cube = hsi::standardize(hsi::load_cube(cube_path));
  std::optional<hsi::LabelMap> gt;
  if (label_path) {
    gt = hsi::load_labels(*label_path);
    if (gt->height != cube.height || gt->width != cube.width) {
      throw ValidationError("label map is " + std::to_string(gt->height) + "x" + std::to_string(gt->width) +
                            " but the cube is " + std::to_string(cube.height) + "x" + std::to_string(cube.width));
    }
  }
  std::optional<int> classes;
  if (cfg.contains("classes") && !cfg["classes"].is_null()) {
    if (!cfg["classes"].is_number_integer()) throw ConfigError("'classes' must be an integer");
    classes = cfg["classes"].get<int>();
  } else if (gt) {
    classes = gt->classes();
  }
  if (!classes || *classes < 1) throw ConfigError("number of classes unknown (set 'classes' or provide labels)");

  const int superpixels =
      hsi::choose_superpixel_count(cube, gt ? &*gt : nullptr, classes, config.superpixels);
  if (superpixels > std::numeric_limits<std::uint16_t>::max()) throw ConfigError("superpixel count exceeds 65535");

  json resolved = train::to_json(config);
  resolved["cube"] = cube_path.string();
  if (label_path) resolved["labels"] = label_path->string();
  resolved["output"] = output_dir->string();
  resolved["classes"] = *classes;
  resolved["connectivity"] = connectivity;

  fs::path staging = *output_dir;
  staging += ".partial";
  fs::remove_all(staging);
  fs::create_directories(staging);
  try {
    PipelineOptions options;
    options.classes = *classes;
    options.enforce_connectivity = connectivity;
    options.outputs.checkpoint = staging / "checkpoint.bin";
    options.outputs.loss_csv = staging / "losses.csv";
    spdlog::info("training {} epochs ({}), M = {}", config.epochs, train::to_string(config.ablation), superpixels);
    PipelineResult result = run_pipeline(cube, gt ? &*gt : nullptr, config, superpixels, options);

    const auto write_start = std::chrono::steady_clock::now();
    json metrics = json::object();
    if (result.metrics) metrics = cluster::to_json(*result.metrics);
    metrics["superpixels"] = superpixels;
    metrics["segments"] = result.segmentation.count();
    metrics["eigengap"] = result.clusters.eigengap;
    metrics["ablation"] = train::to_string(config.ablation);
    io::write_text_atomic(staging / "metrics.json", metrics.dump(2) + "\n");

    write_label_outputs(to_label_map(result.clusters.pixel_labels, cube.height, cube.width), staging,
                        "pixel_labels", config.seed);
    std::vector<int> segments(result.segmentation.labels.size());
    std::transform(result.segmentation.labels.begin(), result.segmentation.labels.end(), segments.begin(),
                   [](int s) { return s + 1; });
    write_label_outputs(to_label_map(segments, cube.height, cube.width), staging, "superpixels", config.seed);

    const Matrix& z = result.training.final_trace.unfolding.state().z;
    selfrep::write_dense_csv(z, staging / "coefficients.csv");
    selfrep::write_triplet_csv(z, staging / "coefficients_triplets.csv");
    // the saved copy leaves out its own location so runs into different
    // directories hash identically
    json saved = resolved;
    saved.erase("output");
    io::write_text_atomic(staging / "config.json", saved.dump(2) + "\n");
    result.stage_seconds["write"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - write_start).count();

    json inputs = {{cube_path.string(), io::sha256_file(cube_path)},
                   {hsi::companion_raw(cube_path).string(), io::sha256_file(hsi::companion_raw(cube_path))}};
    if (label_path) {
      inputs[label_path->string()] = io::sha256_file(*label_path);
      inputs[hsi::companion_raw(*label_path).string()] = io::sha256_file(hsi::companion_raw(*label_path));
    }
    json outputs = json::object();
    for (const auto& entry : fs::directory_iterator(staging)) {
      if (entry.is_regular_file()) outputs[entry.path().filename().string()] = io::sha256_file(entry.path());
    }
    const json manifest = {{"config", resolved},
                           {"inputs", inputs},
                           {"outputs", outputs},
                           {"stage_seconds", result.stage_seconds},
                           {"seed", config.seed},
                           {"superpixels", superpixels},
                           {"ablation", train::to_string(config.ablation)},
                           {"epochs_run", result.training.epochs_run}};
    io::write_text_atomic(staging / "manifest.json", manifest.dump(2) + "\n");

    fs::remove_all(*output_dir);
    fs::rename(staging, *output_dir);
  } catch (...) {
    std::error_code ignored;
    fs::remove_all(staging, ignored);
    throw;
  }
  out << io::read_text(*output_dir / "metrics.json");
}

void cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const hsi::LabelMap pred = hsi::load_labels(a.pred);
  const hsi::LabelMap gt = hsi::load_labels(a.gt);
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ValidationError("dimension mismatch: prediction is " + std::to_string(pred.height) + "x" +
                          std::to_string(pred.width) + ", ground truth is " + std::to_string(gt.height) + "x" +
                          std::to_string(gt.width));
  }
  const std::vector<int> p(pred.labels.begin(), pred.labels.end());
  const std::vector<int> g(gt.labels.begin(), gt.labels.end());
  const auto report = cluster::evaluate(p, g);
  out << cluster::to_json(report).dump(2) << '\n';
  char line[128];
  std::snprintf(line, sizeof line, "OA (%%) %.2f  NMI %.4f  kappa %.4f", 100.0 * report.oa, report.nmi,
                report.kappa);
  err << line << '\n';
}

void cmd_render(const RenderArgs& a) {
  const hsi::LabelMap map = hsi::load_labels(a.labels);
  io::write_label_ppm(a.out, map.labels, map.height, map.width, a.seed);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Superpixel-based subspace clustering of hyperspectral images", "spixel-ssc"};
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic union-of-subspaces cube and its labels");
  s->add_option("--size", synth.size, "HxW")->capture_default_str();
  s->add_option("--bands", synth.bands)->capture_default_str()->check(CLI::PositiveNumber);
  s->add_option("--classes", synth.classes)->required()->check(CLI::PositiveNumber);
  s->add_option("--subspace-dim", synth.subspace_dim)->capture_default_str()->check(CLI::PositiveNumber);
  s->add_option("--noise", synth.noise, "Gaussian noise sigma")->capture_default_str()->check(CLI::NonNegativeNumber);
  s->add_option("--layout", synth.layout)->capture_default_str()->check(CLI::IsMember({"blocks", "voronoi"}));
  s->add_option("--seed", synth.seed)->capture_default_str();
  s->add_option("--out", synth.out, "Output stem; writes <stem>.hsi.json/.raw and <stem>.lbl.json/.raw")
      ->capture_default_str();

  RunArgs run;
  auto* r = app.add_subcommand("run", "Train, cluster and evaluate");
  r->add_option("--config", run.config, "JSON config")->required();
  r->add_option("--ablation", run.ablation)->check(CLI::IsMember({"M1", "M2", "M3", "M4", "full"}));
  r->add_option("--superpixels", run.superpixels)->check(CLI::PositiveNumber);
  r->add_option("--output", run.output, "Output directory");
  r->add_option("--epochs", run.epochs)->check(CLI::NonNegativeNumber);
  r->add_option("--seed", run.seed);
  r->add_flag("--force", run.force, "Overwrite an existing output directory");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predicted labels against ground truth");
  e->add_option("pred", ev.pred)->required();
  e->add_option("gt", ev.gt)->required();

  RenderArgs rn;
  auto* rd = app.add_subcommand("render", "Render a label map as a PPM image");
  rd->add_option("labels", rn.labels)->required();
  rd->add_option("--out", rn.out)->required();
  rd->add_option("--seed", rn.seed)->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  }

  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);
  try {
    if (s->parsed()) cmd_synth(synth, out);
    if (r->parsed()) cmd_run(run, out);
    if (e->parsed()) cmd_eval(ev, out, err);
    if (rd->parsed()) cmd_render(rn);
  } catch (const NumericalError& ex) {
    err << "numerical failure: " << ex.what() << '\n';
    return kExitNumerical;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace spixel_ssc::cli
