// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <string_view>

namespace gbh {

// Axis-aligned box by center and extent, in pixels.
struct Box {
  double cx = 0;
  double cy = 0;
  double w = 0;
  double h = 0;

  double x1() const { return cx - w / 2; }
  double y1() const { return cy - h / 2; }
  double x2() const { return cx + w / 2; }
  double y2() const { return cy + h / 2; }
  double area() const { return w * h; }

  static Box from_corners(double x1, double y1, double x2, double y2) {
    return {(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1};
  }
};

inline double intersection_area(const Box& a, const Box& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  return (iw > 0 && ih > 0) ? iw * ih : 0.0;
}

inline double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

struct Detection {
  int class_id = 0;
  double confidence = 0;
  Box box;
};

struct GroundTruth {
  int class_id = 0;
  Box box;
};

inline constexpr std::array<std::string_view, 5> kDefectClasses = {
    "broken", "hot_spot", "black_border", "scratch", "no_electricity"};

inline int class_index(std::string_view name) {
  for (std::size_t i = 0; i < kDefectClasses.size(); ++i) {
    if (kDefectClasses[i] == name) return static_cast<int>(i);
  }
  return -1;
}

inline std::string class_name(int id) {
  if (id >= 0 && static_cast<std::size_t>(id) < kDefectClasses.size()) {
    return std::string(kDefectClasses[static_cast<std::size_t>(id)]);
  }
  return "class" + std::to_string(id);
}

}  // namespace gbh
