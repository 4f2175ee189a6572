#pragma once

#include "spixel_ssc/common.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace spixel_ssc::io {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

/// Writes to `<path>.tmp` and renames over `path`.
void write_bytes_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// Lowercase hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_bytes(std::span<const std::uint8_t> bytes);

/// Little-endian append/extract for arithmetic types.
template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_arithmetic_v<T>);
  std::array<std::uint8_t, sizeof(T)> raw{};
  std::memcpy(raw.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
  }
  out.insert(out.end(), raw.begin(), raw.end());
}

template <typename T>
T get_le(const std::uint8_t* in) {
  static_assert(std::is_arithmetic_v<T>);
  std::array<std::uint8_t, sizeof(T)> raw{};
  std::memcpy(raw.data(), in, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
  }
  T value;
  std::memcpy(&value, raw.data(), sizeof(T));
  return value;
}

using Rgb = std::array<std::uint8_t, 3>;

/// `count` pairwise-distinct, non-black colors drawn from a seeded RNG.
std::vector<Rgb> palette(int count, std::uint64_t seed);

/// Binary PPM (P6). Label 0 renders black; label l > 0 uses palette entry l-1.
void write_label_ppm(const std::filesystem::path& path, std::span<const std::uint16_t> labels,
                     int height, int width, std::uint64_t seed);

}  // namespace spixel_ssc::io
