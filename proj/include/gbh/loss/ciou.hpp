// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <numbers>

#include "gbh/detect/box.hpp"
#include "gbh/loss/dual.hpp"

namespace gbh {

template <typename S>
struct BoxT {
  S cx, cy, w, h;
};

namespace detail {
template <typename S>
S smax(const S& a, const S& b) {
  return a < b ? b : a;
}
template <typename S>
S smin(const S& a, const S& b) {
  return a < b ? a : b;
}
}  // namespace detail

// Complete IoU: IoU - rho^2 / c^2 - alpha * v with
//   rho = center distance, c = enclosing-box diagonal,
//   v = 4/pi^2 (atan(wa/(ha+eps)) - atan(wb/(hb+eps)))^2, alpha = v / (1 - IoU + v + eps).
// Works on plain scalars or dual numbers; alpha is differentiated too.
template <typename S>
S ciou(const BoxT<S>& a, const BoxT<S>& b, double eps = 1e-9) {
  using detail::smax;
  using detail::smin;
  using std::atan;
  const S half(0.5);
  const S ax1 = a.cx - a.w * half, ax2 = a.cx + a.w * half;
  const S ay1 = a.cy - a.h * half, ay2 = a.cy + a.h * half;
  const S bx1 = b.cx - b.w * half, bx2 = b.cx + b.w * half;
  const S by1 = b.cy - b.h * half, by2 = b.cy + b.h * half;
  const S zero(0);
  const S iw = smax(smin(ax2, bx2) - smax(ax1, bx1), zero);
  const S ih = smax(smin(ay2, by2) - smax(ay1, by1), zero);
  const S inter = iw * ih;
  const S uni = a.w * a.h + b.w * b.h - inter + S(eps);
  const S iou_v = inter / uni;
  const S cw = smax(ax2, bx2) - smin(ax1, bx1);
  const S ch = smax(ay2, by2) - smin(ay1, by1);
  const S c2 = cw * cw + ch * ch + S(eps);
  const S dx = b.cx - a.cx, dy = b.cy - a.cy;
  const S rho2 = dx * dx + dy * dy;
  const S dat = atan(b.w / (b.h + S(eps))) - atan(a.w / (a.h + S(eps)));
  const S v = S(4.0 / (std::numbers::pi * std::numbers::pi)) * dat * dat;
  const S alpha = v / (S(1) - iou_v + v + S(eps));
  return iou_v - rho2 / c2 - alpha * v;
}

inline double ciou(const Box& a, const Box& b) {
  return ciou(BoxT<double>{a.cx, a.cy, a.w, a.h}, BoxT<double>{b.cx, b.cy, b.w, b.h});
}

}  // namespace gbh
