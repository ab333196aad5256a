// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

// Cuts full-resolution panel images into fixed-size crops around defect
// clusters. A cluster is a connected component of boxes that overlap once
// each is dilated by `dilation` pixels on every side.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "gbh/data/image.hpp"

namespace gbh::data {

inline constexpr std::size_t kCropSize = 600;
inline constexpr double kClusterDilation = 50;
inline constexpr double kMinBoxExtent = 2;

struct CropOptions {
  std::size_t crop = kCropSize;
  double dilation = kClusterDilation;
};

// Cluster label per box.
inline std::vector<std::size_t> cluster_boxes(const std::vector<GroundTruth>& boxes, double dilation) {
  std::vector<std::size_t> parent(boxes.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      const Box& a = boxes[i].box;
      const Box& b = boxes[j].box;
      const bool touch = a.x1() - dilation <= b.x2() + dilation && b.x1() - dilation <= a.x2() + dilation &&
                         a.y1() - dilation <= b.y2() + dilation && b.y1() - dilation <= a.y2() + dilation;
      if (touch) parent[find(i)] = find(j);
    }
  }
  std::vector<std::size_t> root(boxes.size()), label(boxes.size());
  std::vector<std::size_t> seen;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    root[i] = find(i);
    auto it = std::find(seen.begin(), seen.end(), root[i]);
    label[i] = static_cast<std::size_t>(it - seen.begin());
    if (it == seen.end()) seen.push_back(root[i]);
  }
  return label;
}

// One crop per cluster, centered on the cluster's extent and clamped to the
// image. Every box meeting the crop is translated and clipped; slivers
// narrower than 2 px are dropped, as are crops left without boxes. Images
// not larger than the crop in both extents yield nothing.
inline std::vector<AnnotatedImage> preprocess_crop(const AnnotatedImage& raw, const CropOptions& opt = {}) {
  std::vector<AnnotatedImage> out;
  const std::size_t c = opt.crop;
  if (raw.image.width <= c || raw.image.height <= c || raw.boxes.empty()) return out;
  const auto label = cluster_boxes(raw.boxes, opt.dilation);
  const std::size_t clusters = *std::max_element(label.begin(), label.end()) + 1;
  const double cd = static_cast<double>(c);
  for (std::size_t k = 0; k < clusters; ++k) {
    double x1 = 1e300, y1 = 1e300, x2 = -1e300, y2 = -1e300;
    for (std::size_t i = 0; i < raw.boxes.size(); ++i) {
      if (label[i] != k) continue;
      const Box& b = raw.boxes[i].box;
      x1 = std::min(x1, b.x1());
      y1 = std::min(y1, b.y1());
      x2 = std::max(x2, b.x2());
      y2 = std::max(y2, b.y2());
    }
    const double max_x = static_cast<double>(raw.image.width - c);
    const double max_y = static_cast<double>(raw.image.height - c);
    const double ox = std::clamp(std::round((x1 + x2) / 2 - cd / 2), 0.0, max_x);
    const double oy = std::clamp(std::round((y1 + y2) / 2 - cd / 2), 0.0, max_y);
    AnnotatedImage a;
    a.id = raw.id + "_c" + std::to_string(k);
    for (const auto& g : raw.boxes) {
      GroundTruth t{g.class_id, {g.box.cx - ox, g.box.cy - oy, g.box.w, g.box.h}};
      if (!clip_box(t.box, 0, 0, cd, cd)) continue;
      if (t.box.w < kMinBoxExtent || t.box.h < kMinBoxExtent) continue;
      a.boxes.push_back(t);
    }
    if (a.boxes.empty()) continue;
    a.image = crop(raw.image, static_cast<long>(ox), static_cast<long>(oy), c, c);
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace gbh::data
