// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

// Synthetic PV panel images for desk-scale runs. A grayscale cell grid with
// busbars carries class-characteristic defects:
//   scratch         thin bright line
//   black_border    dark edge strip
//   hot_spot        bright blob
//   broken          jagged dark region crossed by a crack
//   no_electricity  fully dark cell area
// Defect extents are drawn at 600 px scale and multiplied by size / 600,
// never below 3 px. The emitted boxes are the drawn extents.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "gbh/data/image.hpp"

namespace gbh::data {

struct SizeRange {
  double w_lo, w_hi, h_lo, h_hi;
};

// Indexed like kDefectClasses, at 600 px scale.
inline constexpr std::array<SizeRange, 5> kDefectSizes = {{
    {80, 130, 160, 260},   // broken
    {120, 180, 160, 260},  // hot_spot
    {3, 6, 28, 46},        // black_border
    {3, 6, 24, 40},        // scratch
    {280, 400, 380, 540},  // no_electricity
}};

inline constexpr double kSynthMinExtent = 3;
inline constexpr double kSynthMaxOverlap = 0.3;
inline constexpr int kScratchClass = 3;

struct SynthSpec {
  std::array<std::size_t, 5> counts{};  // per class, indexed like kDefectClasses
  // Scratches come in groups of this many parallel lines `scratch_gap` px
  // apart (at the output scale).
  std::size_t scratch_group = 1;
  double scratch_gap = 2;

  std::size_t total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
};

namespace detail {

inline std::uint8_t clamp_px(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

inline void draw_background(Image& img, std::mt19937_64& rng) {
  const std::size_t cell = std::max<std::size_t>(8, img.width / 6);
  const std::size_t line = std::max<std::size_t>(1, img.width / 300);
  std::uniform_int_distribution<int> noise(-6, 6);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      double v = 95;
      const std::size_t cx = x % cell, cy = y % cell;
      if (cx < line || cy < line) {
        v = 45;  // cell border
      } else if (cy >= cell / 3 && cy < cell / 3 + line) {
        v = 160;  // busbar
      } else if (cy >= 2 * cell / 3 && cy < 2 * cell / 3 + line) {
        v = 160;
      }
      img.at(x, y) = clamp_px(v + noise(rng));
    }
  }
}

inline void fill_rect(Image& img, const Box& b, double value, std::mt19937_64& rng, int jitter = 8) {
  std::uniform_int_distribution<int> noise(-jitter, jitter);
  for (auto y = static_cast<std::size_t>(b.y1()); y < static_cast<std::size_t>(b.y2()); ++y) {
    for (auto x = static_cast<std::size_t>(b.x1()); x < static_cast<std::size_t>(b.x2()); ++x) {
      img.at(x, y) = clamp_px(value + noise(rng));
    }
  }
}

// Inscribed ellipse; `ragged` > 0 modulates the radius with angle.
inline void fill_blob(Image& img, const Box& b, double inner, double outer, double ragged,
                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> phase(0, 6.283185307179586);
  const double p1 = phase(rng), p2 = phase(rng);
  for (auto y = static_cast<std::size_t>(b.y1()); y < static_cast<std::size_t>(b.y2()); ++y) {
    for (auto x = static_cast<std::size_t>(b.x1()); x < static_cast<std::size_t>(b.x2()); ++x) {
      const double dx = (static_cast<double>(x) + 0.5 - b.cx) / (b.w / 2);
      const double dy = (static_cast<double>(y) + 0.5 - b.cy) / (b.h / 2);
      const double r = std::sqrt(dx * dx + dy * dy);
      const double ang = std::atan2(dy, dx);
      const double limit = 1.0 - ragged * (0.5 + 0.25 * std::sin(7 * ang + p1) + 0.25 * std::sin(13 * ang + p2));
      if (r > limit) continue;
      const double t = r / limit;
      img.at(x, y) = clamp_px(inner * (1 - t) + outer * t);
    }
  }
}

// Diagonal crack spanning the full box so the drawn extent equals the box.
inline void draw_crack(Image& img, const Box& b, double value) {
  const auto x0 = static_cast<std::size_t>(b.x1()), y0 = static_cast<std::size_t>(b.y1());
  const auto w = static_cast<std::size_t>(b.w), h = static_cast<std::size_t>(b.h);
  const std::size_t steps = std::max(w, h);
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t x = x0 + std::min(w - 1, i * w / steps);
    const std::size_t y = y0 + std::min(h - 1, i * h / steps);
    img.at(x, y) = clamp_px(value);
  }
}

inline void draw_defect(Image& img, int cls, const Box& b, std::mt19937_64& rng) {
  switch (cls) {
    case 0:  // broken
      fill_blob(img, b, 30, 55, 0.35, rng);
      draw_crack(img, b, 20);
      break;
    case 1:  // hot_spot
      fill_blob(img, b, 245, 175, 0.0, rng);
      break;
    case 2:  // black_border
      fill_rect(img, b, 22, rng, 4);
      break;
    case 3:  // scratch
      fill_rect(img, b, 235, rng, 6);
      break;
    default:  // no_electricity
      fill_rect(img, b, 32, rng, 5);
      break;
  }
}

}  // namespace detail

// Draws one extent for class `cls` at the given output size.
inline std::pair<double, double> draw_defect_extent(int cls, std::size_t size, std::mt19937_64& rng) {
  const auto& r = kDefectSizes[static_cast<std::size_t>(cls)];
  const double f = static_cast<double>(size) / 600.0;
  std::uniform_real_distribution<double> uw(r.w_lo, r.w_hi), uh(r.h_lo, r.h_hi);
  const double lim = static_cast<double>(size);
  const double w = std::min(lim, std::max(kSynthMinExtent, std::round(uw(rng) * f)));
  const double h = std::min(lim, std::max(kSynthMinExtent, std::round(uh(rng) * f)));
  return {w, h};
}

// Places defects largest class first; throws SpecError when a defect cannot
// be placed with IoU <= 0.3 against all earlier ones.
inline AnnotatedImage synth_panel(std::mt19937_64& rng, std::size_t size, const SynthSpec& spec,
                                  std::string id = "synth") {
  if (size < 16) throw SpecError("synth_panel: size must be at least 16");
  AnnotatedImage out;
  out.id = std::move(id);
  out.image = Image(size, size);
  detail::draw_background(out.image, rng);

  constexpr std::array<int, 5> order = {4, 1, 0, 2, 3};
  constexpr int kAttempts = 1000;
  const double lim = static_cast<double>(size);
  auto fits = [&](const Box& b) {
    for (const auto& g : out.boxes) {
      if (iou(g.box, b) > kSynthMaxOverlap) return false;
    }
    return true;
  };
  auto place = [&](double w, double h) -> Box {
    std::uniform_real_distribution<double> ux(0, lim - w), uy(0, lim - h);
    for (int a = 0; a < kAttempts; ++a) {
      const double x1 = std::floor(ux(rng)), y1 = std::floor(uy(rng));
      const Box b = Box::from_corners(x1, y1, x1 + w, y1 + h);
      if (fits(b)) return b;
    }
    throw SpecError("synth_panel: cannot place " + std::to_string(spec.total()) + " defects in a " +
                    std::to_string(size) + " px image without overlap above IoU 0.3");
  };

  for (int cls : order) {
    std::size_t left = spec.counts[static_cast<std::size_t>(cls)];
    while (left > 0) {
      if (cls == kScratchClass && spec.scratch_group > 1) {
        const std::size_t n = std::min(left, spec.scratch_group);
        auto [w, h] = draw_defect_extent(cls, size, rng);
        const double pitch = w + spec.scratch_gap;
        const double total_w = pitch * static_cast<double>(n) - spec.scratch_gap;
        if (total_w > lim) throw SpecError("synth_panel: scratch group wider than the image");
        const Box region = place(total_w, h);
        for (std::size_t k = 0; k < n; ++k) {
          const double x1 = region.x1() + pitch * static_cast<double>(k);
          const Box b = Box::from_corners(x1, region.y1(), x1 + w, region.y2());
          detail::draw_defect(out.image, cls, b, rng);
          out.boxes.push_back({cls, b});
        }
        left -= n;
      } else {
        auto [w, h] = draw_defect_extent(cls, size, rng);
        const Box b = place(w, h);
        detail::draw_defect(out.image, cls, b, rng);
        out.boxes.push_back({cls, b});
        --left;
      }
    }
  }
  return out;
}

// Per-image generator seeded from (seed, index), so output does not depend
// on generation order.
inline std::mt19937_64 item_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

struct CorpusOptions {
  std::size_t count = 16;
  std::size_t size = 600;
  std::uint64_t seed = 0;
  std::size_t max_defects = 2;     // per image, each of a uniformly drawn class
  std::size_t scratch_groups = 0;  // extra scratch groups per image
  std::size_t scratch_group = 3;
  double scratch_gap = 2;
  std::string prefix = "synth";
};

// Image i is drawn from item_rng(seed, i) with 1..max_defects defects plus
// `scratch_groups` groups of parallel scratches.
inline std::vector<AnnotatedImage> synth_corpus(const CorpusOptions& opt) {
  if (opt.max_defects == 0 && opt.scratch_groups == 0) throw SpecError("synth_corpus: no defects requested");
  std::vector<AnnotatedImage> out;
  out.reserve(opt.count);
  for (std::size_t i = 0; i < opt.count; ++i) {
    auto rng = item_rng(opt.seed, i);
    SynthSpec spec;
    spec.scratch_group = opt.scratch_group;
    spec.scratch_gap = opt.scratch_gap;
    if (opt.max_defects > 0) {
      std::uniform_int_distribution<std::size_t> n(1, opt.max_defects);
      std::uniform_int_distribution<std::size_t> cls(0, kDefectClasses.size() - 1);
      for (std::size_t k = n(rng); k > 0; --k) ++spec.counts[cls(rng)];
    }
    spec.counts[kScratchClass] += opt.scratch_groups * opt.scratch_group;
    char id[64];
    std::snprintf(id, sizeof(id), "%s_%05zu", opt.prefix.c_str(), i);
    out.push_back(synth_panel(rng, opt.size, spec, id));
  }
  return out;
}

}  // namespace gbh::data
