// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gbh/core/error.hpp"
#include "gbh/core/tensor.hpp"
#include "gbh/detect/box.hpp"

namespace gbh::data {

inline constexpr std::uint8_t kPadValue = 114;

// Single-channel 8-bit image, row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool empty() const { return width == 0 || height == 0; }
};

// Copies the [x0, x0 + w) x [y0, y0 + h) window; parts outside the source
// are filled with `fill`.
inline Image crop(const Image& src, long x0, long y0, std::size_t w, std::size_t h,
                  std::uint8_t fill = kPadValue) {
  Image out(w, h, fill);
  for (std::size_t y = 0; y < h; ++y) {
    const long sy = y0 + static_cast<long>(y);
    if (sy < 0 || sy >= static_cast<long>(src.height)) continue;
    for (std::size_t x = 0; x < w; ++x) {
      const long sx = x0 + static_cast<long>(x);
      if (sx < 0 || sx >= static_cast<long>(src.width)) continue;
      out.at(x, y) = src.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy));
    }
  }
  return out;
}

// Bilinear resampling with pixel-center alignment.
inline Image resize(const Image& src, std::size_t w, std::size_t h) {
  if (src.empty() || w == 0 || h == 0) throw ContractError("resize: empty image or target");
  if (w == src.width && h == src.height) return src;
  Image out(w, h);
  const double sx = static_cast<double>(src.width) / static_cast<double>(w);
  const double sy = static_cast<double>(src.height) / static_cast<double>(h);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(src.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, src.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(src.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const double tx = fx - static_cast<double>(x0);
      const double top = src.at(x0, y0) * (1 - tx) + src.at(x1, y0) * tx;
      const double bot = src.at(x0, y1) * (1 - tx) + src.at(x1, y1) * tx;
      out.at(x, y) = static_cast<std::uint8_t>(std::lround(top * (1 - ty) + bot * ty));
    }
  }
  return out;
}

// Writes the image into channel-replicated slot `b` of an N x 3 x H x W
// tensor, scaled to [0, 1].
template <typename T>
void write_to_batch(const Image& img, Tensor<T>& batch, std::size_t b) {
  if (batch.ndim() != 4 || batch.dim(1) != 3 || batch.dim(2) != img.height || batch.dim(3) != img.width) {
    throw DimensionError("write_to_batch", "shape",
                         to_string(batch.shape()) + " vs image " + std::to_string(img.width) + "x" +
                             std::to_string(img.height));
  }
  const std::size_t plane = img.width * img.height;
  T* dst = batch.data().data() + b * 3 * plane;
  for (std::size_t i = 0; i < plane; ++i) {
    const T v = static_cast<T>(img.pixels[i]) / T(255);
    dst[i] = v;
    dst[plane + i] = v;
    dst[2 * plane + i] = v;
  }
}

// An image with its ground truth. Boxes are in the image's pixel frame.
struct AnnotatedImage {
  std::string id;
  Image image;
  std::vector<GroundTruth> boxes;
};

inline bool box_inside(const Box& b, std::size_t width, std::size_t height, double tol = 1e-9) {
  return b.w > 0 && b.h > 0 && b.x1() >= -tol && b.y1() >= -tol &&
         b.x2() <= static_cast<double>(width) + tol && b.y2() <= static_cast<double>(height) + tol;
}

// Intersects `b` with [x0, x1) x [y0, y1); returns false when nothing is left.
inline bool clip_box(Box& b, double x0, double y0, double x1, double y1) {
  if (b.w > 0 && b.h > 0 && b.x1() >= x0 && b.y1() >= y0 && b.x2() <= x1 && b.y2() <= y1) return true;
  const double l = std::max(b.x1(), x0), t = std::max(b.y1(), y0);
  const double r = std::min(b.x2(), x1), d = std::min(b.y2(), y1);
  if (r <= l || d <= t) return false;
  b = Box::from_corners(l, t, r, d);
  return true;
}

}  // namespace gbh::data
