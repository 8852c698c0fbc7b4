#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fcd/common.hpp"

namespace fcd {

// Interleaved HWC raster with values in [0, 1]. Rendered and file-loaded
// images always hold exact multiples of 1/255 so 8-bit round trips are
// lossless.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<Real> data;

  Image() = default;
  Image(int h, int w, int c, Real fill = 0) : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, fill) {}

  Real& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
  Real at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
  size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

// Binary label raster; 1 marks the face region.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> data;

  Mask() = default;
  Mask(int h, int w, uint8_t fill = 0) : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

  uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
  size_t count_ones() const;
};

inline Real quantize_u8(double v) {
  if (v < 0.0) v = 0.0;
  if (v > 1.0) v = 1.0;
  return static_cast<Real>(static_cast<int>(v * 255.0 + 0.5) / 255.0);
}

// Lossless 8-bit raster I/O (binary PPM for images, PGM for masks).
void write_ppm(const Image& img, const std::string& path);
Image read_ppm(const std::string& path);
void write_pgm(const Mask& mask, const std::string& path);
Mask read_pgm(const std::string& path);

// Bilinear sample with replicate border handling; (y, x) in pixel centers.
Real sample_bilinear(const Image& img, double y, double x, int c);

// Bilinear resize to (out_h, out_w) using the half-pixel center convention.
Image resize_bilinear(const Image& img, int out_h, int out_w);

// Nearest-neighbor resize; keeps labels binary.
Mask resize_nearest(const Mask& mask, int out_h, int out_w);

// Extracts the rectangle [y0, y0+h) x [x0, x0+w); out-of-bounds pixels are
// replicated from the nearest edge.
Image crop_replicate(const Image& img, int y0, int x0, int h, int w);
Mask crop_replicate(const Mask& mask, int y0, int x0, int h, int w);

// Separable gaussian blur with the given kernel size (odd) and sigma.
Image gaussian_blur(const Image& img, int kernel, double sigma);

// Rotates about the image center by `degrees`; bilinear for images with
// replicate border, nearest with zero fill for masks.
Image rotate_bilinear(const Image& img, double degrees);
Mask rotate_nearest(const Mask& mask, double degrees);

Image hflip(const Image& img);
Mask hflip(const Mask& mask);

}  // namespace fcd
