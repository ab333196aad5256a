// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

// k-means anchor computation on box extents with distance 1 - IoU of
// co-centered boxes. Centroids are seeded from area quantiles, updated to the
// mean extent of their members, and iterated until assignments stop changing.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gbh/loss/assign.hpp"
#include "gbh/model/variant.hpp"

namespace gbh::data {

inline constexpr std::size_t kAnchorIterations = 300;

struct AnchorOptions {
  std::size_t iterations = kAnchorIterations;
  std::uint64_t seed = 0;  // re-seeds empty clusters
};

struct AnchorResult {
  model::AnchorSet anchors;
  bool fallback = false;
  std::string warning;
  std::size_t iterations = 0;
};

inline double shape_iou(const model::Anchor& a, const model::Anchor& b) {
  const double inter = std::min(a.w, b.w) * std::min(a.h, b.h);
  return inter / (a.w * a.h + b.w * b.h - inter);
}

inline double shape_distance(const model::Anchor& a, const model::Anchor& b) { return 1.0 - shape_iou(a, b); }

// Returns k centroids sorted by area (ascending). Requires boxes.size() >= k.
inline std::vector<model::Anchor> kmeans_anchors(const std::vector<model::Anchor>& boxes, std::size_t k,
                                                 const AnchorOptions& opt = {}, std::size_t* iterations = nullptr) {
  if (k == 0 || boxes.size() < k) throw ContractError("kmeans_anchors: need at least k boxes");
  for (const auto& b : boxes) {
    if (!(b.w > 0) || !(b.h > 0)) throw ContractError("kmeans_anchors: box extents must be positive");
  }
  std::vector<model::Anchor> sorted = boxes;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.w * a.h < b.w * b.h; });
  std::vector<model::Anchor> centers(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double q = (static_cast<double>(j) + 0.5) / static_cast<double>(k);
    centers[j] = sorted[static_cast<std::size_t>(q * static_cast<double>(sorted.size()))];
  }
  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> assign(boxes.size(), k);
  std::size_t it = 0;
  for (; it < opt.iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      std::size_t best = 0;
      double best_d = shape_distance(boxes[i], centers[0]);
      for (std::size_t j = 1; j < k; ++j) {
        const double d = shape_distance(boxes[i], centers[j]);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sw(k, 0), sh(k, 0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      sw[assign[i]] += boxes[i].w;
      sh[assign[i]] += boxes[i].h;
      ++count[assign[i]];
    }
    std::uniform_int_distribution<std::size_t> pick(0, boxes.size() - 1);
    for (std::size_t j = 0; j < k; ++j) {
      if (count[j] == 0) {
        centers[j] = boxes[pick(rng)];
      } else {
        centers[j] = {sw[j] / static_cast<double>(count[j]), sh[j] / static_cast<double>(count[j])};
      }
    }
  }
  if (iterations) *iterations = it;
  std::stable_sort(centers.begin(), centers.end(),
                   [](const auto& a, const auto& b) { return a.w * a.h < b.w * b.h; });
  return centers;
}

// Clusters heads * per_head anchors and deals them out fine to coarse by
// area. With fewer boxes than anchors the fallback constants are returned.
inline AnchorResult adaptive_anchors(const std::vector<model::Anchor>& boxes,
                                     const std::vector<std::size_t>& strides, std::size_t per_head,
                                     std::size_t input_size, const AnchorOptions& opt = {}) {
  AnchorResult r;
  const std::size_t k = strides.size() * per_head;
  if (boxes.size() < k) {
    r.fallback = true;
    r.warning = "only " + std::to_string(boxes.size()) + " boxes for " + std::to_string(k) +
                " anchors; using fallback anchors";
    r.anchors = model::fallback_anchors(strides, input_size);
    if (per_head != 3) {
      for (auto& head : r.anchors) head.resize(per_head, head.back());
    }
    return r;
  }
  const auto centers = kmeans_anchors(boxes, k, opt, &r.iterations);
  for (std::size_t h = 0; h < strides.size(); ++h) {
    r.anchors.emplace_back(centers.begin() + static_cast<long>(h * per_head),
                           centers.begin() + static_cast<long>((h + 1) * per_head));
  }
  return r;
}

// Fraction of boxes within the ratio gate of at least one anchor.
inline double anchor_coverage(const std::vector<model::Anchor>& boxes, const model::AnchorSet& anchors,
                              double ratio_gate = kDefaultRatioGate) {
  if (boxes.empty()) return 1.0;
  std::size_t hit = 0;
  for (const auto& b : boxes) {
    bool ok = false;
    for (const auto& head : anchors) {
      for (const auto& a : head) ok = ok || anchor_ratio(Box{0, 0, b.w, b.h}, a) < ratio_gate;
    }
    hit += ok ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(boxes.size());
}

}  // namespace gbh::data
