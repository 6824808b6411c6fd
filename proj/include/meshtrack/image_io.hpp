#pragma once

#include <png.h>

#include <array>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "meshtrack/error.hpp"

namespace meshtrack {

/// 8-bit single-channel raster, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// 8-bit RGB raster, row-major interleaved.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  void set(int x, int y, std::array<std::uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    std::uint8_t* p = &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

namespace detail {

inline void skip_pnm_space(std::span<const std::uint8_t> b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
}

inline int read_pnm_int(std::span<const std::uint8_t> b, std::size_t& pos) {
  skip_pnm_space(b, pos);
  if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError("malformed PGM header");
  long v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos] - '0');
    if (v > (1 << 24)) throw FormatError("PGM dimension too large");
    ++pos;
  }
  return static_cast<int>(v);
}

inline bool is_png(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return b.size() >= 8 && std::memcmp(b.data(), sig, 8) == 0;
}

}  // namespace detail

/// Binary PGM (P5), maxval 255.
inline GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("not a binary PGM");
  std::size_t pos = 2;
  const int w = detail::read_pnm_int(bytes, pos);
  const int h = detail::read_pnm_int(bytes, pos);
  const int maxval = detail::read_pnm_int(bytes, pos);
  if (w <= 0 || h <= 0) throw FormatError("PGM has zero size");
  if (maxval != 255) throw FormatError("PGM maxval must be 255");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("malformed PGM header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() - pos < n) throw FormatError("truncated PGM payload");
  GrayImage img(w, h);
  std::memcpy(img.pixels.data(), bytes.data() + pos, n);
  return img;
}

inline std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

inline GrayImage decode_png_gray(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw FormatError(std::string("PNG decode failed: ") + image.message);
  image.format = PNG_FORMAT_GRAY;
  GrayImage img(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("PNG decode failed: " + msg);
  }
  return img;
}

namespace detail {

inline std::vector<std::uint8_t> encode_png(const std::uint8_t* data, int w, int h,
                                            png_uint_32 format) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, data, 0, nullptr))
    throw Error(std::string("PNG encode failed: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, data, 0, nullptr))
    throw Error(std::string("PNG encode failed: ") + image.message);
  out.resize(size);
  return out;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png(const GrayImage& img) {
  return detail::encode_png(img.pixels.data(), img.width, img.height, PNG_FORMAT_GRAY);
}

inline std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  return detail::encode_png(img.pixels.data(), img.width, img.height, PNG_FORMAT_RGB);
}

/// Decodes PGM (P5) or 8-bit PNG, sniffing the signature.
inline GrayImage decode_gray(std::span<const std::uint8_t> bytes) {
  if (detail::is_png(bytes)) return decode_png_gray(bytes);
  return decode_pgm(bytes);
}

}  // namespace meshtrack
