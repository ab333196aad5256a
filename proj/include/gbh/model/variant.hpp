// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "gbh/core/error.hpp"

namespace gbh::model {

struct Anchor {
  double w = 0;
  double h = 0;
};

using AnchorSet = std::vector<std::vector<Anchor>>;  // [head][anchor], input pixels

inline constexpr std::array<std::string_view, 4> kVariantNames = {"yolov5s", "yolov5-1",
                                                                  "yolov5-2", "gbh"};

// Declarative description of one of the four ablation networks.
struct ModelVariant {
  std::string name = "gbh";
  double depth_multiple = 1.0 / 3.0;
  double width_multiple = 0.5;
  std::size_t input_size = 960;
  std::size_t num_classes = 5;
  std::size_t anchors_per_head = 3;
  std::vector<std::size_t> head_strides;
  AnchorSet anchors;  // empty -> fallback constants

  bool uses_csp() const { return name != "yolov5s"; }
  bool uses_ghost() const { return name == "gbh"; }
  bool has_tiny_head() const { return name == "yolov5-2" || name == "gbh"; }
  std::size_t num_heads() const { return head_strides.size(); }
  std::size_t outputs_per_anchor() const { return 5 + num_classes; }

  void validate() const {
    bool known = false;
    for (auto n : kVariantNames) known = known || n == name;
    if (!known) throw SpecError("unknown model variant '" + name + "'");
    if (!(depth_multiple > 0) || !(width_multiple > 0)) {
      throw SpecError("depth/width multiples must be positive");
    }
    if (num_classes == 0) throw SpecError("num_classes must be positive");
    if (anchors_per_head == 0) throw SpecError("anchors_per_head must be positive");
    const auto& want = expected_strides();
    if (head_strides != want) throw SpecError("head strides do not match variant " + name);
    if (input_size == 0 || input_size % head_strides.back() != 0) {
      throw SpecError("input size " + std::to_string(input_size) +
                      " must be a positive multiple of " + std::to_string(head_strides.back()));
    }
    if (!anchors.empty()) {
      if (anchors.size() != num_heads()) throw SpecError("anchor set has wrong head count");
      for (const auto& head : anchors) {
        if (head.size() != anchors_per_head) throw SpecError("anchor set has wrong anchor count");
        for (const auto& a : head) {
          if (!(a.w > 0) || !(a.h > 0)) throw SpecError("anchor extents must be positive");
        }
      }
    }
  }

  std::vector<std::size_t> expected_strides() const {
    if (has_tiny_head()) return {4, 8, 16, 32};
    return {8, 16, 32};
  }

  // Lineage default multiples: depth 1/3, width 1/2.
  static ModelVariant standard(std::string_view name, std::size_t input_size = 960) {
    ModelVariant v;
    v.name = std::string(name);
    v.input_size = input_size;
    v.head_strides = v.expected_strides();
    v.validate();
    return v;
  }

  // Desk-scale profile: depth 1/3, width 1/8, input 192.
  static ModelVariant tiny(std::string_view name, std::size_t input_size = 192) {
    ModelVariant v = standard(name, input_size);
    v.width_multiple = 1.0 / 8.0;
    v.validate();
    return v;
  }
};

// Lineage constants at 640 input, scaled to `input_size`. The stride-4 set
// is only used by the four-head variants.
inline AnchorSet fallback_anchors(const std::vector<std::size_t>& strides, std::size_t input_size) {
  auto base = [](std::size_t stride) -> std::vector<Anchor> {
    switch (stride) {
      case 4: return {{5, 6}, {8, 14}, {15, 11}};
      case 8: return {{10, 13}, {16, 30}, {33, 23}};
      case 16: return {{30, 61}, {62, 45}, {59, 119}};
      case 32: return {{116, 90}, {156, 198}, {373, 326}};
      default: throw SpecError("no fallback anchors for stride " + std::to_string(stride));
    }
  };
  const double f = static_cast<double>(input_size) / 640.0;
  AnchorSet out;
  for (auto s : strides) {
    auto set = base(s);
    for (auto& a : set) {
      a.w *= f;
      a.h *= f;
    }
    out.push_back(std::move(set));
  }
  return out;
}

}  // namespace gbh::model
