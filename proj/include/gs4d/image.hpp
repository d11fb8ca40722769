#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gs4d/common.hpp"

namespace gs4d {

/// Row-major H x W x C raster, values nominally in [0, 1].
template <class S>
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<S> data;

  Image() = default;
  Image(int h, int w, int c, S fill = S(0)) : height(h), width(w), channels(c), data(std::size_t(h) * w * c, fill) {}

  S& at(int y, int x, int c) { return data[(std::size_t(y) * width + x) * channels + c]; }
  const S& at(int y, int x, int c) const { return data[(std::size_t(y) * width + x) * channels + c]; }

  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }

  template <class T>
  Image<T> cast() const {
    Image<T> out(height, width, channels);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = T(data[i]);
    return out;
  }
};

inline std::uint8_t quantize_u8(double v) {
  const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return std::uint8_t(std::lround(c * 255.0));
}

namespace detail {

inline int ppm_read_token(std::istream& in) {
  // Skips whitespace and '#' comments between header tokens.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF) throw DataError("truncated image header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

}  // namespace detail

/// Reads binary PPM (P6, RGB) or PGM (P5, grayscale), 8-bit, into [0, 1].
/// 255 maps to exactly 1.0.
template <class S>
Image<S> read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image file: " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  int channels = 0;
  if (m0 == 'P' && m1 == '6') {
    channels = 3;
  } else if (m0 == 'P' && m1 == '5') {
    channels = 1;
  } else {
    throw DataError("unsupported image format (want binary PPM/PGM): " + path);
  }
  const int width = detail::ppm_read_token(in);
  const int height = detail::ppm_read_token(in);
  const int maxval = detail::ppm_read_token(in);
  if (width <= 0 || height <= 0) throw DataError("bad image dimensions in " + path);
  if (maxval != 255) throw DataError("only 8-bit images supported: " + path);
  std::vector<std::uint8_t> raw(std::size_t(width) * height * channels);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (std::size_t(in.gcount()) != raw.size()) throw DataError("truncated pixel data in " + path);
  Image<S> img(height, width, channels);
  for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = S(raw[i]) / S(255);
  return img;
}

/// Writes binary PPM (3-channel) or PGM (1-channel). Values are clamped to
/// [0, 1] and rounded to 8 bits.
template <class S>
void write_pnm(const Image<S>& img, const std::string& path) {
  if (img.channels != 3 && img.channels != 1) throw DataError("write_pnm: image must have 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image file: " + path);
  out << (img.channels == 3 ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
  std::vector<std::uint8_t> raw(img.data.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = quantize_u8(double(img.data[i]));
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
  if (!out) throw DataError("failed writing image file: " + path);
}

}  // namespace gs4d
