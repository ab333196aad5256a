// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "gbh/core/error.hpp"
#include "gbh/detect/box.hpp"
#include "gbh/model/variant.hpp"

namespace gbh {

inline constexpr double kDefaultRatioGate = 4.0;

struct TargetEntry {
  std::size_t gt = 0;  // index into the image's GT list
  std::size_t head = 0;
  std::size_t anchor = 0;
  std::size_t cell_x = 0;
  std::size_t cell_y = 0;
};

struct TargetAssignment {
  std::vector<TargetEntry> entries;
  std::vector<std::size_t> unmatched;  // GT indices no anchor accepted

  std::size_t count_for(std::size_t gt) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.gt == gt; }));
  }
};

// Worst-axis ratio between a box and an anchor; 1 means identical extents.
inline double anchor_ratio(const Box& b, const model::Anchor& a) {
  const double rw = b.w / a.w, rh = b.h / a.h;
  return std::max({rw, 1.0 / rw, rh, 1.0 / rh});
}

// A GT goes to anchor `a` of head `h` when anchor_ratio < ratio_gate. The
// cell containing its center receives the target, plus the horizontal and
// vertical neighbour nearest to the center (when inside the grid).
inline TargetAssignment assign_targets(const std::vector<GroundTruth>& gts,
                                       const model::AnchorSet& anchors,
                                       const std::vector<std::size_t>& strides,
                                       std::size_t input_size,
                                       double ratio_gate = kDefaultRatioGate) {
  if (anchors.size() != strides.size()) {
    throw SpecError("assign_targets: " + std::to_string(anchors.size()) + " anchor sets for " +
                    std::to_string(strides.size()) + " heads");
  }
  TargetAssignment out;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const Box& b = gts[g].box;
    bool matched = false;
    for (std::size_t h = 0; h < strides.size(); ++h) {
      const double s = static_cast<double>(strides[h]);
      const auto grid = static_cast<long>(input_size / strides[h]);
      const double gx = b.cx / s, gy = b.cy / s;
      const long ox = std::clamp(static_cast<long>(std::floor(gx)), 0L, grid - 1);
      const long oy = std::clamp(static_cast<long>(std::floor(gy)), 0L, grid - 1);
      const double fx = gx - std::floor(gx), fy = gy - std::floor(gy);
      std::vector<std::pair<long, long>> cells = {{ox, oy}};
      if (fx < 0.5 && gx > 1.0) cells.push_back({ox - 1, oy});
      if (fx > 0.5 && static_cast<double>(grid) - gx > 1.0) cells.push_back({ox + 1, oy});
      if (fy < 0.5 && gy > 1.0) cells.push_back({ox, oy - 1});
      if (fy > 0.5 && static_cast<double>(grid) - gy > 1.0) cells.push_back({ox, oy + 1});
      for (std::size_t a = 0; a < anchors[h].size(); ++a) {
        if (!(anchor_ratio(b, anchors[h][a]) < ratio_gate)) continue;
        matched = true;
        for (auto [cx, cy] : cells) {
          if (cx < 0 || cy < 0 || cx >= grid || cy >= grid) continue;
          out.entries.push_back(
              {g, h, a, static_cast<std::size_t>(cx), static_cast<std::size_t>(cy)});
        }
      }
    }
    if (!matched) out.unmatched.push_back(g);
  }
  return out;
}

}  // namespace gbh
