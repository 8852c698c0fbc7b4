#include "fcd/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace fcd {

size_t Mask::count_ones() const {
  size_t n = 0;
  for (uint8_t v : data) n += (v != 0);
  return n;
}

namespace {

void write_binary(const std::string& path, const std::string& header, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot open for writing: " + path);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  check(out.good(), "write failed: " + path);
}

// Reads one whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
    } else if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      break;
    }
  }
  while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
  return tok;
}

struct PnmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
};

PnmHeader read_pnm_header(std::istream& in, const std::string& path) {
  PnmHeader h;
  h.magic = next_token(in);
  try {
    h.width = std::stoi(next_token(in));
    h.height = std::stoi(next_token(in));
    h.maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw Error("malformed PNM header: " + path);
  }
  check(h.width > 0 && h.height > 0 && h.maxval == 255, "unsupported PNM format: " + path);
  return h;
}

}  // namespace

void write_ppm(const Image& img, const std::string& path) {
  check_arg(img.channels == 3, "write_ppm expects a 3-channel image");
  std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<uint8_t> bytes(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) {
    double v = std::clamp(static_cast<double>(img.data[i]), 0.0, 1.0);
    bytes[i] = static_cast<uint8_t>(v * 255.0 + 0.5);
  }
  write_binary(path, header, bytes);
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open image file: " + path);
  PnmHeader h = read_pnm_header(in, path);
  check(h.magic == "P6", "not a binary PPM: " + path);
  Image img(h.height, h.width, 3);
  std::vector<uint8_t> bytes(img.data.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  check(in.gcount() == static_cast<std::streamsize>(bytes.size()), "truncated PPM: " + path);
  for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = static_cast<Real>(bytes[i] / 255.0);
  return img;
}

void write_pgm(const Mask& mask, const std::string& path) {
  std::string header = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  std::vector<uint8_t> bytes(mask.data.size());
  for (size_t i = 0; i < mask.data.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
  write_binary(path, header, bytes);
}

Mask read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open mask file: " + path);
  PnmHeader h = read_pnm_header(in, path);
  check(h.magic == "P5", "not a binary PGM: " + path);
  Mask mask(h.height, h.width);
  std::vector<uint8_t> bytes(mask.data.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  check(in.gcount() == static_cast<std::streamsize>(bytes.size()), "truncated PGM: " + path);
  for (size_t i = 0; i < bytes.size(); ++i) mask.data[i] = bytes[i] >= 128 ? 1 : 0;
  return mask;
}

Real sample_bilinear(const Image& img, double y, double x, int c) {
  int y0 = static_cast<int>(std::floor(y));
  int x0 = static_cast<int>(std::floor(x));
  double fy = y - y0;
  double fx = x - x0;
  auto clampy = [&](int v) { return std::clamp(v, 0, img.height - 1); };
  auto clampx = [&](int v) { return std::clamp(v, 0, img.width - 1); };
  double v00 = img.at(clampy(y0), clampx(x0), c);
  double v01 = img.at(clampy(y0), clampx(x0 + 1), c);
  double v10 = img.at(clampy(y0 + 1), clampx(x0), c);
  double v11 = img.at(clampy(y0 + 1), clampx(x0 + 1), c);
  double top = v00 + (v01 - v00) * fx;
  double bot = v10 + (v11 - v10) * fx;
  return static_cast<Real>(top + (bot - top) * fy);
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  check_arg(img.height > 0 && img.width > 0, "resize of empty image");
  check_arg(out_h > 0 && out_w > 0, "resize to empty extent");
  Image out(out_h, out_w, img.channels);
  double sy = static_cast<double>(img.height) / out_h;
  double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double src_y = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < out_w; ++x) {
      double src_x = (x + 0.5) * sx - 0.5;
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = sample_bilinear(img, src_y, src_x, c);
    }
  }
  return out;
}

Mask resize_nearest(const Mask& mask, int out_h, int out_w) {
  check_arg(mask.height > 0 && mask.width > 0, "resize of empty mask");
  Mask out(out_h, out_w);
  double sy = static_cast<double>(mask.height) / out_h;
  double sx = static_cast<double>(mask.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    int src_y = std::clamp(static_cast<int>((y + 0.5) * sy), 0, mask.height - 1);
    for (int x = 0; x < out_w; ++x) {
      int src_x = std::clamp(static_cast<int>((x + 0.5) * sx), 0, mask.width - 1);
      out.at(y, x) = mask.at(src_y, src_x);
    }
  }
  return out;
}

Image crop_replicate(const Image& img, int y0, int x0, int h, int w) {
  check_arg(h > 0 && w > 0, "empty crop");
  Image out(h, w, img.channels);
  for (int y = 0; y < h; ++y) {
    int sy = std::clamp(y0 + y, 0, img.height - 1);
    for (int x = 0; x < w; ++x) {
      int sx = std::clamp(x0 + x, 0, img.width - 1);
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

Mask crop_replicate(const Mask& mask, int y0, int x0, int h, int w) {
  check_arg(h > 0 && w > 0, "empty crop");
  Mask out(h, w);
  for (int y = 0; y < h; ++y) {
    int sy = std::clamp(y0 + y, 0, mask.height - 1);
    for (int x = 0; x < w; ++x) {
      int sx = std::clamp(x0 + x, 0, mask.width - 1);
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

Image gaussian_blur(const Image& img, int kernel, double sigma) {
  check_arg(kernel >= 1 && kernel % 2 == 1, "blur kernel must be odd");
  check_arg(sigma > 0, "blur sigma must be positive");
  int r = kernel / 2;
  std::vector<double> k(static_cast<size_t>(kernel));
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    k[static_cast<size_t>(i + r)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[static_cast<size_t>(i + r)];
  }
  for (double& v : k) v /= sum;

  Image tmp(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[static_cast<size_t>(i + r)] * img.at(y, std::clamp(x + i, 0, img.width - 1), c);
        tmp.at(y, x, c) = static_cast<Real>(acc);
      }
  Image out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[static_cast<size_t>(i + r)] * tmp.at(std::clamp(y + i, 0, img.height - 1), x, c);
        out.at(y, x, c) = static_cast<Real>(acc);
      }
  return out;
}

Image rotate_bilinear(const Image& img, double degrees) {
  double rad = degrees * 3.14159265358979323846 / 180.0;
  double cs = std::cos(rad), sn = std::sin(rad);
  double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
  Image out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      // Inverse map: rotate the destination pixel back into the source.
      double dy = y - cy, dx = x - cx;
      double sy = cy + dy * cs - dx * sn;
      double sx = cx + dy * sn + dx * cs;
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = sample_bilinear(img, sy, sx, c);
    }
  return out;
}

Mask rotate_nearest(const Mask& mask, double degrees) {
  double rad = degrees * 3.14159265358979323846 / 180.0;
  double cs = std::cos(rad), sn = std::sin(rad);
  double cy = (mask.height - 1) / 2.0, cx = (mask.width - 1) / 2.0;
  Mask out(mask.height, mask.width, 0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      double dy = y - cy, dx = x - cx;
      int sy = static_cast<int>(std::lround(cy + dy * cs - dx * sn));
      int sx = static_cast<int>(std::lround(cx + dy * sn + dx * cs));
      if (sy >= 0 && sy < mask.height && sx >= 0 && sx < mask.width) out.at(y, x) = mask.at(sy, sx);
    }
  return out;
}

Image hflip(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

Mask hflip(const Mask& mask) {
  Mask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) out.at(y, x) = mask.at(y, mask.width - 1 - x);
  return out;
}

}  // namespace fcd
