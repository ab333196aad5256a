// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "gbh/data/image.hpp"

namespace gbh::data {

// input = original * scale + pad, per axis.
struct LetterboxTransform {
  double scale = 1;
  double pad_x = 0;
  double pad_y = 0;

  Box to_input(const Box& b) const {
    return {b.cx * scale + pad_x, b.cy * scale + pad_y, b.w * scale, b.h * scale};
  }
  Box to_original(const Box& b) const {
    return {(b.cx - pad_x) / scale, (b.cy - pad_y) / scale, b.w / scale, b.h / scale};
  }
};

struct Letterboxed {
  Image image;
  LetterboxTransform transform;
};

inline LetterboxTransform letterbox_transform(std::size_t width, std::size_t height, std::size_t target) {
  if (width == 0 || height == 0 || target == 0) throw ContractError("letterbox: empty extent");
  LetterboxTransform t;
  t.scale = std::min(static_cast<double>(target) / static_cast<double>(width),
                     static_cast<double>(target) / static_cast<double>(height));
  const auto nw = static_cast<std::size_t>(std::lround(static_cast<double>(width) * t.scale));
  const auto nh = static_cast<std::size_t>(std::lround(static_cast<double>(height) * t.scale));
  t.pad_x = static_cast<double>((target - std::min(nw, target)) / 2);
  t.pad_y = static_cast<double>((target - std::min(nh, target)) / 2);
  return t;
}

// Aspect-preserving resize into a target x target canvas padded with 114.
inline Letterboxed letterbox(const Image& img, std::size_t target) {
  Letterboxed out;
  out.transform = letterbox_transform(img.width, img.height, target);
  const auto& t = out.transform;
  const auto nw = std::min(target, static_cast<std::size_t>(std::lround(static_cast<double>(img.width) * t.scale)));
  const auto nh = std::min(target, static_cast<std::size_t>(std::lround(static_cast<double>(img.height) * t.scale)));
  const Image scaled = resize(img, std::max<std::size_t>(nw, 1), std::max<std::size_t>(nh, 1));
  out.image = Image(target, target, kPadValue);
  const auto px = static_cast<std::size_t>(t.pad_x), py = static_cast<std::size_t>(t.pad_y);
  for (std::size_t y = 0; y < scaled.height; ++y) {
    std::copy_n(scaled.pixels.begin() + static_cast<long>(y * scaled.width), scaled.width,
                out.image.pixels.begin() + static_cast<long>((y + py) * target + px));
  }
  return out;
}

inline AnnotatedImage letterbox(const AnnotatedImage& a, std::size_t target, LetterboxTransform* transform = nullptr) {
  auto lb = letterbox(a.image, target);
  AnnotatedImage out{a.id, std::move(lb.image), {}};
  const double edge = static_cast<double>(target);
  for (auto g : a.boxes) {
    g.box = lb.transform.to_input(g.box);
    if (clip_box(g.box, 0, 0, edge, edge)) out.boxes.push_back(g);
  }
  if (transform) *transform = lb.transform;
  return out;
}

}  // namespace gbh::data
