#include "spixel_ssc/hsi_data.hpp"

#include "spixel_ssc/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <string>

namespace spixel_ssc::hsi {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kConstantBandTol = 1e-12;

json read_header(const fs::path& header) {
  try {
    return json::parse(io::read_text(header));
  } catch (const json::exception& e) {
    throw IoError("malformed header " + header.string() + ": " + e.what());
  }
}

int positive_field(const json& h, const char* key, const fs::path& header) {
  if (!h.contains(key) || !h[key].is_number_integer() || h[key].get<long>() < 1) {
    throw ValidationError(header.string() + ": field '" + key + "' must be a positive integer");
  }
  return h[key].get<int>();
}

void expect_string(const json& h, const char* key, const char* value, const fs::path& header) {
  if (!h.contains(key) || h[key] != value) {
    throw ValidationError(header.string() + ": field '" + key + "' must be \"" + value + "\"");
  }
}

std::vector<std::uint8_t> read_raw(const fs::path& raw, std::size_t expected) {
  if (!fs::exists(raw)) {
    throw IoError("missing raw file " + raw.string() + ": expected " + std::to_string(expected) +
                  " bytes");
  }
  auto bytes = io::read_bytes(raw);
  if (bytes.size() != expected) {
    throw IoError(raw.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                  std::to_string(bytes.size()));
  }
  return bytes;
}

void write_header(const fs::path& header, const json& h) { io::write_text_atomic(header, h.dump(2) + "\n"); }

}  // namespace

int LabelMap::classes() const {
  std::vector<bool> seen(65536, false);
  int n = 0;
  for (auto l : labels) {
    if (l != 0 && !seen[l]) {
      seen[l] = true;
      ++n;
    }
  }
  return n;
}

std::size_t LabelMap::labeled() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
}

LabelMap densify(const LabelMap& map) {
  std::map<std::uint16_t, std::uint16_t> remap;
  for (auto l : map.labels) {
    if (l != 0) remap.emplace(l, 0);
  }
  std::uint16_t next = 1;
  for (auto& [from, to] : remap) to = next++;
  LabelMap out = map;
  for (auto& l : out.labels) {
    if (l != 0) l = remap[l];
  }
  return out;
}

fs::path companion_raw(const fs::path& header) {
  const std::string name = header.filename().string();
  const std::string suffix = ".json";
  if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
    throw ValidationError("header path must end in .json: " + header.string());
  }
  return header.parent_path() / (name.substr(0, name.size() - suffix.size()) + ".raw");
}

HsiCube load_cube(const fs::path& header) {
  const json h = read_header(header);
  HsiCube cube;
  cube.height = positive_field(h, "height", header);
  cube.width = positive_field(h, "width", header);
  cube.bands = positive_field(h, "bands", header);
  expect_string(h, "dtype", "f32le", header);
  expect_string(h, "order", "bip", header);

  const auto n = static_cast<std::size_t>(cube.pixels());
  const auto d = static_cast<std::size_t>(cube.bands);
  const auto bytes = read_raw(companion_raw(header), n * d * 4);

  cube.values.resize(cube.pixels(), cube.bands);
  double* dst = cube.values.data();
  for (std::size_t k = 0; k < n * d; ++k) {
    const float v = io::get_le<float>(bytes.data() + 4 * k);
    if (!std::isfinite(v)) {
      throw ValidationError(header.string() + ": non-finite value at index " + std::to_string(k) +
                            " (pixel " + std::to_string(k / d) + ", band " + std::to_string(k % d) + ")");
    }
    dst[k] = v;
  }
  cube.band_mean = Vector::Zero(cube.bands);
  cube.band_std = Vector::Ones(cube.bands);
  return cube;
}

void save_cube(const HsiCube& cube, const fs::path& header) {
  if (cube.values.rows() != cube.pixels() || cube.values.cols() != cube.bands) {
    throw ValidationError("cube values do not match its geometry");
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(cube.values.size()) * 4);
  const double* src = cube.values.data();
  for (Eigen::Index k = 0; k < cube.values.size(); ++k) io::put_le(bytes, static_cast<float>(src[k]));
  io::write_bytes_atomic(companion_raw(header), bytes);
  write_header(header, json{{"height", cube.height},
                            {"width", cube.width},
                            {"bands", cube.bands},
                            {"dtype", "f32le"},
                            {"order", "bip"}});
}

LabelMap load_labels(const fs::path& header) {
  const json h = read_header(header);
  LabelMap map;
  map.height = positive_field(h, "height", header);
  map.width = positive_field(h, "width", header);
  expect_string(h, "dtype", "u16le", header);
  const auto n = static_cast<std::size_t>(map.height) * map.width;
  const auto bytes = read_raw(companion_raw(header), n * 2);
  map.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) map.labels[i] = io::get_le<std::uint16_t>(bytes.data() + 2 * i);
  return map;
}

void save_labels(const LabelMap& map, const fs::path& header) {
  if (map.labels.size() != static_cast<std::size_t>(map.height) * map.width) {
    throw ValidationError("label map size does not match its geometry");
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve(map.labels.size() * 2);
  for (auto l : map.labels) io::put_le(bytes, l);
  io::write_bytes_atomic(companion_raw(header), bytes);
  write_header(header, json{{"height", map.height}, {"width", map.width}, {"dtype", "u16le"}});
}

HsiCube standardize(HsiCube cube) {
  const Eigen::Index n = cube.pixels();
  if (cube.band_mean.size() != cube.bands) cube.band_mean = Vector::Zero(cube.bands);
  if (cube.band_std.size() != cube.bands) cube.band_std = Vector::Ones(cube.bands);

#pragma omp parallel for schedule(static)
  for (int b = 0; b < cube.bands; ++b) {
    auto col = cube.values.col(b);
    const double mean = col.sum() / static_cast<double>(n);
    const double var = (col.array() - mean).square().sum() / static_cast<double>(n);
    double sd = std::sqrt(var);
    if (sd < kConstantBandTol * std::max(1.0, std::abs(mean))) {
      col.setZero();
      sd = 1.0;
    } else {
      col = (col.array() - mean) / sd;
    }
    // compose with any earlier standardization so the stored stats still map
    // back to the original values
    cube.band_mean[b] += cube.band_std[b] * mean;
    cube.band_std[b] *= sd;
  }
  return cube;
}

std::pair<HsiCube, LabelMap> make_synthetic(const SynthSpec& spec) {
  if (spec.height < 1 || spec.width < 1 || spec.bands < 1) throw ValidationError("synthetic cube needs positive size");
  if (spec.classes < 2) throw ValidationError("synthetic cube needs at least 2 classes");
  if (spec.subspace_dim < 1 || spec.subspace_dim >= spec.bands) {
    throw ValidationError("subspace_dim must lie in [1, bands); got " + std::to_string(spec.subspace_dim) +
                          " with " + std::to_string(spec.bands) + " bands");
  }
  if (!(spec.noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be >= 0");
  const long n = static_cast<long>(spec.height) * spec.width;
  if (n < spec.classes) throw ValidationError("fewer pixels than classes");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Matrix> bases;
  bases.reserve(static_cast<std::size_t>(spec.classes));
  for (int c = 0; c < spec.classes; ++c) {
    Matrix g(spec.bands, spec.subspace_dim);
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = gauss(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    bases.push_back(qr.householderQ() * Matrix::Identity(spec.bands, spec.subspace_dim));
  }

  LabelMap labels{spec.height, spec.width, std::vector<std::uint16_t>(static_cast<std::size_t>(n))};
  if (spec.region_layout == RegionLayout::blocks) {
    const auto tiles = near_square_tiling(spec.height, spec.width, spec.classes).tile_map();
    for (long i = 0; i < n; ++i) labels.labels[i] = static_cast<std::uint16_t>(tiles[i] + 1);
  } else {
    std::vector<long> seeds;
    std::uniform_int_distribution<long> pick(0, n - 1);
    while (static_cast<int>(seeds.size()) < spec.classes) {
      const long s = pick(rng);
      if (std::find(seeds.begin(), seeds.end(), s) == seeds.end()) seeds.push_back(s);
    }
    for (long i = 0; i < n; ++i) {
      const long y = i / spec.width, x = i % spec.width;
      long best = 0, best_d = -1;
      for (int c = 0; c < spec.classes; ++c) {
        const long dy = y - seeds[c] / spec.width, dx = x - seeds[c] % spec.width;
        const long d = dy * dy + dx * dx;
        if (best_d < 0 || d < best_d) {
          best_d = d;
          best = c;
        }
      }
      labels.labels[i] = static_cast<std::uint16_t>(best + 1);
    }
  }

  HsiCube cube;
  cube.height = spec.height;
  cube.width = spec.width;
  cube.bands = spec.bands;
  cube.values.resize(n, spec.bands);
  // Coefficients vary smoothly in space: bilinear interpolation of U[0,1)
  // values on a lattice with kCoefficientSpacing-pixel spacing, one lattice per
  // class and subspace dimension.
  const int ly = (spec.height - 1) / kCoefficientSpacing + 2, lx = (spec.width - 1) / kCoefficientSpacing + 2;
  std::vector<RowMatrix> lattice;
  for (int f = 0; f < spec.classes * spec.subspace_dim; ++f) {
    lattice.push_back(RowMatrix::NullaryExpr(ly, lx, [&] { return unit(rng); }));
  }
  Vector coeff(spec.subspace_dim);
  for (long i = 0; i < n; ++i) {
    const int c = labels.labels[i] - 1;
    const double fy = static_cast<double>(i / spec.width) / kCoefficientSpacing;
    const double fx = static_cast<double>(i % spec.width) / kCoefficientSpacing;
    const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
    const double ty = fy - y0, tx = fx - x0;
    for (int k = 0; k < spec.subspace_dim; ++k) {
      const RowMatrix& g = lattice[static_cast<std::size_t>(c * spec.subspace_dim + k)];
      coeff[k] = (1 - ty) * ((1 - tx) * g(y0, x0) + tx * g(y0, x0 + 1)) +
                 ty * ((1 - tx) * g(y0 + 1, x0) + tx * g(y0 + 1, x0 + 1));
    }
    cube.values.row(i) = (bases[labels.labels[i] - 1] * coeff).transpose();
    if (spec.noise_sigma > 0.0) {
      for (int b = 0; b < spec.bands; ++b) cube.values(i, b) += spec.noise_sigma * gauss(rng);
    }
  }
  cube.band_mean = Vector::Zero(spec.bands);
  cube.band_std = Vector::Ones(spec.bands);
  return {std::move(cube), std::move(labels)};
}

namespace {

// 256-bin Otsu threshold over `values`; returns +inf when the range is flat.
double otsu_threshold(const std::vector<double>& values) {
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi - lo > 1e-12 * std::max(1.0, std::abs(hi)))) return std::numeric_limits<double>::infinity();

  constexpr int kBins = 256;
  std::array<double, kBins> hist{};
  const double scale = kBins / (hi - lo);
  for (double v : values) hist[std::min(kBins - 1, static_cast<int>((v - lo) * scale))] += 1.0;

  const double total = static_cast<double>(values.size());
  double sum_all = 0.0;
  for (int b = 0; b < kBins; ++b) sum_all += b * hist[b];

  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_bin = 0;
  for (int b = 0; b < kBins; ++b) {
    w0 += hist[b];
    sum0 += b * hist[b];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_bin = b;
    }
  }
  // pixels in bins above best_bin are foreground
  return lo + (best_bin + 1) / scale;
}

}  // namespace

int edge_superpixel_estimate(const HsiCube& cube) {
  const int h = cube.height, w = cube.width;
  const Vector mean_band = cube.values.rowwise().mean();
  auto at = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return mean_band[static_cast<Eigen::Index>(y) * w + x];
  };
  std::vector<double> magnitude(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
      const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
      magnitude[static_cast<std::size_t>(y) * w + x] = std::hypot(gx, gy);
    }
  }
  const double threshold = otsu_threshold(magnitude);
  const auto edges = std::count_if(magnitude.begin(), magnitude.end(), [&](double m) { return m >= threshold; });
  return static_cast<int>((edges + 63) / 64);
}

int superpixel_lower_bound(int classes, double area_ratio) {
  if (classes < 1) throw ValidationError("class count must be positive");
  if (!(area_ratio > 0.0 && area_ratio <= 1.0)) throw ValidationError("area ratio must lie in (0, 1]");
  return static_cast<int>(std::ceil(50.0 * classes / area_ratio));
}

int choose_superpixel_count(const HsiCube& cube, const LabelMap* labels, std::optional<int> classes,
                            std::optional<int> override_count) {
  if (override_count) return *override_count;

  const long n = cube.pixels();
  if (!classes && labels != nullptr) classes = labels->classes();
  if (!classes || *classes < 1) {
    throw ConfigError("number of classes unknown: supply labels, a class count, or a superpixel override");
  }

  long lower = 50L * *classes;  // area ratio 1
  if (labels != nullptr) {
    if (static_cast<long>(labels->labels.size()) != n) throw ValidationError("label map does not match cube size");
    const long labeled = static_cast<long>(labels->labeled());
    if (labeled == 0) throw ConfigError("label map has no labeled pixels");
    // ceil(50·C / (labeled/N)) in exact integer arithmetic
    lower = (50L * *classes * n + labeled - 1) / labeled;
  }
  const long m = std::max<long>(edge_superpixel_estimate(cube), lower);
  return static_cast<int>(std::max<long>(*classes, std::min(m, n / 4)));
}

}  // namespace spixel_ssc::hsi
