#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pix2surf/png.hpp"
#include "pix2surf/tensor.hpp"

namespace pix2surf {

// Channel-interleaved float image, values nominally in [0,1].
struct ImageF {
  int h = 0, w = 0, c = 0;
  std::vector<double> data;

  ImageF() = default;
  ImageF(int h_, int w_, int c_, double fill = 0.0)
      : h(h_), w(w_), c(c_), data(size_t(h_) * w_ * c_, fill) {}

  double& at(int r, int col, int ch) { return data[(size_t(r) * w + col) * c + ch]; }
  double at(int r, int col, int ch) const { return data[(size_t(r) * w + col) * c + ch]; }
};

// Per-pixel 3D coordinates in the unit container plus validity mask.
// Background convention: coords are exactly 0 where invalid.
struct NocsMap {
  int h = 0, w = 0;
  std::vector<double> coords;   // h*w*3 interleaved
  std::vector<uint8_t> valid;   // h*w

  NocsMap() = default;
  NocsMap(int h_, int w_) : h(h_), w(w_), coords(size_t(h_) * w_ * 3, 0.0), valid(size_t(h_) * w_, 0) {}

  double& at(int r, int c, int ch) { return coords[(size_t(r) * w + c) * 3 + ch]; }
  double at(int r, int c, int ch) const { return coords[(size_t(r) * w + c) * 3 + ch]; }
  bool is_valid(int r, int c) const { return valid[size_t(r) * w + c] != 0; }
  void set_valid(int r, int c, bool v) { valid[size_t(r) * w + c] = v ? 1 : 0; }

  int valid_count() const {
    int n = 0;
    for (uint8_t v : valid) n += v ? 1 : 0;
    return n;
  }
};

inline uint16_t quantize16(double v) {
  double q = std::nearbyint(std::min(1.0, std::max(0.0, v)) * 65535.0);
  return uint16_t(q);
}

inline uint8_t quantize8(double v) {
  double q = std::nearbyint(std::min(1.0, std::max(0.0, v)) * 255.0);
  return uint8_t(q);
}

inline PngImage to_png8(const ImageF& img) {
  PngImage p;
  p.width = img.w;
  p.height = img.h;
  p.channels = img.c;
  p.bit_depth = 8;
  p.pixels.resize(p.numel());
  for (size_t i = 0; i < img.data.size(); ++i) p.pixels[i] = quantize8(img.data[i]);
  return p;
}

inline ImageF from_png8(const PngImage& p) {
  ImageF img(p.height, p.width, p.channels);
  double s = (p.bit_depth == 16) ? 65535.0 : 255.0;
  for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = double(p.pixels[i]) / s;
  return img;
}

// NOCS maps persist as 16-bit RGB, value = round(coord * 65535).
inline PngImage nocs_to_png16(const NocsMap& m) {
  PngImage p;
  p.width = m.w;
  p.height = m.h;
  p.channels = 3;
  p.bit_depth = 16;
  p.pixels.resize(p.numel());
  for (size_t i = 0; i < m.coords.size(); ++i) p.pixels[i] = quantize16(m.coords[i]);
  return p;
}

inline NocsMap nocs_from_png16(const PngImage& p, const std::vector<uint8_t>& valid) {
  if (p.channels != 3 || p.bit_depth != 16) throw IoError("nocs png must be 16-bit RGB");
  NocsMap m(p.height, p.width);
  m.valid = valid;
  for (size_t i = 0; i < m.coords.size(); ++i)
    m.coords[i] = valid[i / 3] ? double(p.pixels[i]) / 65535.0 : 0.0;
  return m;
}

inline PngImage mask_to_png8(const std::vector<uint8_t>& mask, int h, int w) {
  PngImage p;
  p.width = w;
  p.height = h;
  p.channels = 1;
  p.bit_depth = 8;
  p.pixels.resize(p.numel());
  for (size_t i = 0; i < mask.size(); ++i) p.pixels[i] = mask[i] ? 255 : 0;
  return p;
}

inline std::vector<uint8_t> mask_from_png8(const PngImage& p) {
  if (p.channels != 1) throw IoError("mask png must be single channel");
  std::vector<uint8_t> m(p.pixels.size());
  for (size_t i = 0; i < m.size(); ++i) m[i] = p.pixels[i] >= 128 ? 1 : 0;
  return m;
}

}  // namespace pix2surf
