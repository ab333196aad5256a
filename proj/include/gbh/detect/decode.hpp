// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

/// @file decode.hpp
/// Grid decoding of raw head outputs.
///
/// For cell (cx, cy) of a head with stride s and anchor (aw, ah):
///   bx = (2*sigmoid(tx) - 0.5 + cx) * s      by likewise
///   bw = (2*sigmoid(tw))^2 * aw             bh likewise
/// confidence = sigmoid(objectness) * max_c sigmoid(class_c).
/// The 2*sigmoid - 0.5 offset lets a cell reach half a cell past its
/// borders, which removes the discontinuity at grid boundaries.

#pragma once

#include <cmath>
#include <vector>

#include "gbh/core/ops.hpp"
#include "gbh/detect/box.hpp"
#include "gbh/model/variant.hpp"

namespace gbh {

inline constexpr double kDefaultConfThreshold = 0.25;
inline constexpr double kDefaultIouThreshold = 0.45;

inline double sigmoid(double v) { return gbh::detail::sigmoid_scalar(v); }

// Decodes one head of one batch item. `head` is B x A*(5+C) x S x S.
template <typename T>
std::vector<Detection> decode_head(const Tensor<T>& head, std::size_t batch_index,
                                   const std::vector<model::Anchor>& anchors, std::size_t stride,
                                   double conf_threshold) {
  if (head.ndim() != 4) throw DimensionError("decode", "rank", to_string(head.shape()));
  const std::size_t na = anchors.size();
  if (na == 0 || head.dim(1) % na != 0 || head.dim(1) / na < 6) {
    throw SpecError("decode: " + std::to_string(head.dim(1)) + " channels do not split into " +
                    std::to_string(na) + " anchors of (5 + classes)");
  }
  if (stride == 0) throw SpecError("decode: stride must be positive");
  const std::size_t per = head.dim(1) / na;
  const std::size_t nc = per - 5;
  const std::size_t gh = head.dim(2), gw = head.dim(3);
  std::vector<Detection> out;
  for (std::size_t a = 0; a < na; ++a) {
    for (std::size_t y = 0; y < gh; ++y) {
      for (std::size_t x = 0; x < gw; ++x) {
        auto v = [&](std::size_t k) {
          return static_cast<double>(head.at(batch_index, a * per + k, y, x));
        };
        const double obj = sigmoid(v(4));
        int best = 0;
        double best_p = -1;
        for (std::size_t c = 0; c < nc; ++c) {
          const double p = sigmoid(v(5 + c));
          if (p > best_p) {
            best_p = p;
            best = static_cast<int>(c);
          }
        }
        const double conf = obj * best_p;
        if (conf < conf_threshold) continue;
        Detection d;
        d.class_id = best;
        d.confidence = conf;
        const double s = static_cast<double>(stride);
        d.box.cx = (2 * sigmoid(v(0)) - 0.5 + static_cast<double>(x)) * s;
        d.box.cy = (2 * sigmoid(v(1)) - 0.5 + static_cast<double>(y)) * s;
        d.box.w = std::pow(2 * sigmoid(v(2)), 2) * anchors[a].w;
        d.box.h = std::pow(2 * sigmoid(v(3)), 2) * anchors[a].h;
        if (d.box.w <= 0 || d.box.h <= 0) continue;  // sigmoid underflow
        out.push_back(d);
      }
    }
  }
  return out;
}

template <typename T>
std::vector<Detection> decode(const std::vector<Tensor<T>>& heads, std::size_t batch_index,
                              const model::AnchorSet& anchors,
                              const std::vector<std::size_t>& strides,
                              double conf_threshold = kDefaultConfThreshold) {
  if (heads.size() != anchors.size() || heads.size() != strides.size()) {
    throw SpecError("decode: " + std::to_string(heads.size()) + " heads, " +
                    std::to_string(anchors.size()) + " anchor sets, " +
                    std::to_string(strides.size()) + " strides");
  }
  std::vector<Detection> out;
  for (std::size_t h = 0; h < heads.size(); ++h) {
    auto d = decode_head(heads[h], batch_index, anchors[h], strides[h], conf_threshold);
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

}  // namespace gbh
