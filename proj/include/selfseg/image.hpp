#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "selfseg/rng.hpp"

namespace selfseg {

// Row-major grid of real intensities. Loaded images live in [0, 1];
// normalize() produces zero-mean/unit-std values.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  GrayImage() = default;
  GrayImage(int h, int w, double fill = 0.0)
      : height(h), width(w), data(check_dims(h, w), fill) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
  int pixels() const { return height * width; }

  static std::size_t check_dims(int h, int w) {
    if (h < 1 || w < 1) throw std::invalid_argument("image dimensions must be positive");
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
};

// Row-major grid of {0,1} labels.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), data(GrayImage::check_dims(h, w), fill) {}

  std::uint8_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
  int pixels() const { return height * width; }
};

struct AugmentParams {
  double max_rotation_deg = 20.0;
  double shift_frac = 0.05;
  double zoom_frac = 0.05;
  double shear_frac = 0.05;
  double hflip_prob = 0.5;

  void validate() const {
    if (max_rotation_deg < 0 || shift_frac < 0 || zoom_frac < 0 || shear_frac < 0 ||
        hflip_prob < 0 || hflip_prob > 1)
      throw std::invalid_argument("augment parameters out of range");
  }
};

inline void require_same_shape(const GrayImage& img, const BinaryMask& mask) {
  if (img.height != mask.height || img.width != mask.width)
    throw std::invalid_argument("image/mask dimension mismatch");
}

// Per-image standardization: (x - mean) / max(std, eps), population std.
// Constant images map to all zeros via the eps guard.
inline GrayImage normalize(const GrayImage& img) {
  const double n = static_cast<double>(img.pixels());
  // exact-constant inputs map to exact zeros; the summed mean can land an
  // ulp off and the eps guard would amplify that to ~1e-9
  const bool constant =
      std::all_of(img.data.begin(), img.data.end(), [&](double v) { return v == img.data[0]; });
  if (constant) return GrayImage(img.height, img.width, 0.0);
  double mean = 0.0;
  for (double v : img.data) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : img.data) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / n);
  const double scale = 1.0 / std::max(stddev, 1e-8);
  GrayImage out(img.height, img.width);
  for (int i = 0; i < img.pixels(); ++i) out.data[i] = (img.data[i] - mean) * scale;
  return out;
}

// Source coordinate of output pixel index `i` along an axis of `in` samples
// resized to `out` samples.
inline double resize_coord(int i, int in, int out) {
  return (i + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
}

// Bilinear resize with edge clamping.
inline GrayImage resize(const GrayImage& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize target must be positive");
  GrayImage out(out_h, out_w);
  for (int r = 0; r < out_h; ++r) {
    double sy = resize_coord(r, img.height, out_h);
    sy = std::min(std::max(sy, 0.0), static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fy = sy - y0;
    for (int c = 0; c < out_w; ++c) {
      double sx = resize_coord(c, img.width, out_w);
      sx = std::min(std::max(sx, 0.0), static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double fx = sx - x0;
      const double top = (1.0 - fx) * img.at(y0, x0) + fx * img.at(y0, x1);
      const double bot = (1.0 - fx) * img.at(y1, x0) + fx * img.at(y1, x1);
      out.at(r, c) = (1.0 - fy) * top + fy * bot;
    }
  }
  return out;
}

// Nearest-neighbor resize at the same coordinate mapping, rounding half up.
inline BinaryMask resize_mask(const BinaryMask& mask, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize target must be positive");
  BinaryMask out(out_h, out_w);
  for (int r = 0; r < out_h; ++r) {
    int sy = static_cast<int>(std::floor(resize_coord(r, mask.height, out_h) + 0.5));
    sy = std::min(std::max(sy, 0), mask.height - 1);
    for (int c = 0; c < out_w; ++c) {
      int sx = static_cast<int>(std::floor(resize_coord(c, mask.width, out_w) + 0.5));
      sx = std::min(std::max(sx, 0), mask.width - 1);
      out.at(r, c) = mask.at(sy, sx);
    }
  }
  return out;
}

namespace detail {

// 2x3 affine acting on (x, y) column/row coordinates.
struct Affine {
  double a = 1, b = 0, c = 0, d = 1;  // [a b; c d]
  double tx = 0, ty = 0;

  Affine inverse() const {
    const double det = a * d - b * c;
    if (std::abs(det) < 1e-12) throw std::runtime_error("degenerate affine transform");
    Affine inv;
    inv.a = d / det;
    inv.b = -b / det;
    inv.c = -c / det;
    inv.d = a / det;
    inv.tx = -(inv.a * tx + inv.b * ty);
    inv.ty = -(inv.c * tx + inv.d * ty);
    return inv;
  }
};

inline double sample_bilinear_border0(const GrayImage& img, double y, double x) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  auto px = [&](int r, int c) -> double {
    return (r >= 0 && r < img.height && c >= 0 && c < img.width) ? img.at(r, c) : 0.0;
  };
  const double top = (1.0 - fx) * px(y0, x0) + fx * px(y0, x0 + 1);
  const double bot = (1.0 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1);
  return (1.0 - fy) * top + fy * bot;
}

inline std::uint8_t sample_nearest_border0(const BinaryMask& mask, double y, double x) {
  const int r = static_cast<int>(std::floor(y + 0.5));
  const int c = static_cast<int>(std::floor(x + 0.5));
  return (r >= 0 && r < mask.height && c >= 0 && c < mask.width) ? mask.at(r, c) : 0;
}

}  // namespace detail

// Samples one random affine transform and applies it identically to image
// (bilinear) and mask (nearest); out-of-border reads fill with 0.
//
// Composition, in centered coordinates: flip -> rotation -> shear -> zoom ->
// translation. Draw order is fixed: rotation, shift x, shift y, zoom, shear,
// flip, so a given seed always produces the same transform.
inline std::pair<GrayImage, BinaryMask> augment(const GrayImage& img, const BinaryMask& mask,
                                                const AugmentParams& params, Rng& rng) {
  require_same_shape(img, mask);
  params.validate();

  const double rot = rng.uniform(-params.max_rotation_deg, params.max_rotation_deg) * M_PI / 180.0;
  const double shift_x = rng.uniform(-params.shift_frac, params.shift_frac) * img.width;
  const double shift_y = rng.uniform(-params.shift_frac, params.shift_frac) * img.height;
  const double zoom = rng.uniform(1.0 - params.zoom_frac, 1.0 + params.zoom_frac);
  const double shear = rng.uniform(-params.shear_frac, params.shear_frac);
  const bool flip = rng.bernoulli(params.hflip_prob);

  const double cs = std::cos(rot), sn = std::sin(rot);
  detail::Affine fwd;
  // zoom * shear * rotation * flip, accumulated as one 2x2
  const double fx = flip ? -1.0 : 1.0;
  const double r00 = cs * fx, r01 = -sn, r10 = sn * fx, r11 = cs;
  const double s00 = r00 + shear * r10, s01 = r01 + shear * r11;
  fwd.a = zoom * s00;
  fwd.b = zoom * s01;
  fwd.c = zoom * r10;
  fwd.d = zoom * r11;
  fwd.tx = shift_x;
  fwd.ty = shift_y;

  const detail::Affine inv = fwd.inverse();
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;

  GrayImage out_img(img.height, img.width);
  BinaryMask out_mask(mask.height, mask.width);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const double ox = c - cx, oy = r - cy;
      const double sx = inv.a * ox + inv.b * oy + inv.tx + cx;
      const double sy = inv.c * ox + inv.d * oy + inv.ty + cy;
      out_img.at(r, c) = detail::sample_bilinear_border0(img, sy, sx);
      out_mask.at(r, c) = detail::sample_nearest_border0(mask, sy, sx);
    }
  }
  return {std::move(out_img), std::move(out_mask)};
}

}  // namespace selfseg
