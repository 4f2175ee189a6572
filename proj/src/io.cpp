#include "spixel_ssc/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <memory>
#include <random>
#include <set>
#include <sstream>

namespace spixel_ssc::io {

namespace fs = std::filesystem;

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw IoError("failed reading " + path.string());
  }
  return bytes;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_bytes_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_bytes_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string sha256_bytes(std::span<const std::uint8_t> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_bytes(read_bytes(path)); }

std::vector<Rgb> palette(int count, std::uint64_t seed) {
  if (count < 0 || count > (1 << 24) - 1) throw ValidationError("palette size out of range");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> draw(1, (1u << 24) - 1);
  std::set<std::uint32_t> used;
  std::vector<Rgb> colors;
  colors.reserve(static_cast<std::size_t>(count));
  while (static_cast<int>(colors.size()) < count) {
    const std::uint32_t c = draw(rng);
    if (!used.insert(c).second) continue;
    colors.push_back({static_cast<std::uint8_t>(c >> 16), static_cast<std::uint8_t>(c >> 8),
                      static_cast<std::uint8_t>(c)});
  }
  return colors;
}

void write_label_ppm(const fs::path& path, std::span<const std::uint16_t> labels, int height,
                     int width, std::uint64_t seed) {
  if (labels.size() != static_cast<std::size_t>(height) * width) {
    throw ValidationError("label count does not match " + std::to_string(height) + "x" +
                          std::to_string(width));
  }
  const int max_label = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  const auto colors = palette(max_label, seed);
  const std::string header = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + labels.size() * 3);
  for (std::uint16_t l : labels) {
    const Rgb c = l == 0 ? Rgb{0, 0, 0} : colors[l - 1];
    bytes.insert(bytes.end(), c.begin(), c.end());
  }
  write_bytes_atomic(path, bytes);
}

}  // namespace spixel_ssc::io
