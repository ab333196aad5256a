// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

// Four-image mosaic. A joint point (xc, yc) splits the output into four
// quadrants. Each input is scaled so its longer side equals the output
// size, then placed with its inner corner on the joint (top-left image's
// bottom-right corner, and so on); whatever falls outside the quadrant is
// cropped and uncovered area keeps the pad value.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "gbh/data/image.hpp"
#include "gbh/data/preprocess.hpp"

namespace gbh::data {

inline AnnotatedImage mosaic4_at(const std::array<const AnnotatedImage*, 4>& in, std::size_t size,
                                 std::size_t xc, std::size_t yc) {
  if (xc > size || yc > size) throw ContractError("mosaic4: joint outside the output");
  AnnotatedImage out;
  out.id = "mosaic";
  out.image = Image(size, size, kPadValue);
  const double s = static_cast<double>(size);
  for (std::size_t q = 0; q < 4; ++q) {
    const AnnotatedImage& a = *in[q];
    if (a.image.empty()) throw ContractError("mosaic4: empty input image");
    const double f = s / static_cast<double>(std::max(a.image.width, a.image.height));
    const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(a.image.width * f)));
    const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(a.image.height * f)));
    const Image scaled = resize(a.image, w, h);
    const bool right = q == 1 || q == 3;
    const bool bottom = q == 2 || q == 3;
    // Quadrant bounds in output pixels.
    const long qx0 = right ? static_cast<long>(xc) : 0;
    const long qx1 = right ? static_cast<long>(size) : static_cast<long>(xc);
    const long qy0 = bottom ? static_cast<long>(yc) : 0;
    const long qy1 = bottom ? static_cast<long>(size) : static_cast<long>(yc);
    // Placement of the scaled image's origin.
    const long ox = right ? static_cast<long>(xc) : static_cast<long>(xc) - static_cast<long>(w);
    const long oy = bottom ? static_cast<long>(yc) : static_cast<long>(yc) - static_cast<long>(h);
    for (long y = std::max(qy0, oy); y < std::min(qy1, oy + static_cast<long>(h)); ++y) {
      for (long x = std::max(qx0, ox); x < std::min(qx1, ox + static_cast<long>(w)); ++x) {
        out.image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) =
            scaled.at(static_cast<std::size_t>(x - ox), static_cast<std::size_t>(y - oy));
      }
    }
    const double sx = static_cast<double>(w) / static_cast<double>(a.image.width);
    const double sy = static_cast<double>(h) / static_cast<double>(a.image.height);
    for (const auto& g : a.boxes) {
      GroundTruth t{g.class_id,
                    {g.box.cx * sx + static_cast<double>(ox), g.box.cy * sy + static_cast<double>(oy),
                     g.box.w * sx, g.box.h * sy}};
      if (!clip_box(t.box, static_cast<double>(qx0), static_cast<double>(qy0), static_cast<double>(qx1),
                    static_cast<double>(qy1))) {
        continue;
      }
      if (t.box.w < kMinBoxExtent || t.box.h < kMinBoxExtent) continue;
      out.boxes.push_back(t);
    }
  }
  return out;
}

// Joint drawn uniformly from the central half [size/4, 3*size/4].
template <typename Rng>
AnnotatedImage mosaic4(const std::array<const AnnotatedImage*, 4>& in, std::size_t size, Rng& rng) {
  std::uniform_int_distribution<std::size_t> joint(size / 4, 3 * size / 4);
  const std::size_t xc = joint(rng);
  const std::size_t yc = joint(rng);
  return mosaic4_at(in, size, xc, yc);
}

}  // namespace gbh::data
