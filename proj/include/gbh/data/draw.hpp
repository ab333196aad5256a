// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

// Box outlines and "<class> <confidence>" labels on grayscale images, with a
// built-in 3x5 pixel font.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>

#include "gbh/data/image.hpp"

namespace gbh::data {

namespace detail {

struct Glyph {
  char c;
  std::array<const char*, 5> rows;
};

// clang-format off
inline constexpr std::array<Glyph, 40> kFont = {{
    {'0', {"111", "101", "101", "101", "111"}}, {'1', {"010", "110", "010", "010", "111"}},
    {'2', {"111", "001", "111", "100", "111"}}, {'3', {"111", "001", "111", "001", "111"}},
    {'4', {"101", "101", "111", "001", "001"}}, {'5', {"111", "100", "111", "001", "111"}},
    {'6', {"111", "100", "111", "101", "111"}}, {'7', {"111", "001", "001", "001", "001"}},
    {'8', {"111", "101", "111", "101", "111"}}, {'9', {"111", "101", "111", "001", "111"}},
    {'a', {"010", "101", "111", "101", "101"}}, {'b', {"110", "101", "110", "101", "110"}},
    {'c', {"011", "100", "100", "100", "011"}}, {'d', {"110", "101", "101", "101", "110"}},
    {'e', {"111", "100", "110", "100", "111"}}, {'f', {"111", "100", "110", "100", "100"}},
    {'g', {"011", "100", "101", "101", "011"}}, {'h', {"101", "101", "111", "101", "101"}},
    {'i', {"111", "010", "010", "010", "111"}}, {'j', {"001", "001", "001", "101", "010"}},
    {'k', {"101", "101", "110", "101", "101"}}, {'l', {"100", "100", "100", "100", "111"}},
    {'m', {"101", "111", "111", "101", "101"}}, {'n', {"110", "101", "101", "101", "101"}},
    {'o', {"010", "101", "101", "101", "010"}}, {'p', {"110", "101", "110", "100", "100"}},
    {'q', {"010", "101", "101", "110", "011"}}, {'r', {"110", "101", "110", "101", "101"}},
    {'s', {"011", "100", "010", "001", "110"}}, {'t', {"111", "010", "010", "010", "010"}},
    {'u', {"101", "101", "101", "101", "111"}}, {'v', {"101", "101", "101", "101", "010"}},
    {'w', {"101", "101", "111", "111", "101"}}, {'x', {"101", "101", "010", "101", "101"}},
    {'y', {"101", "101", "010", "010", "010"}}, {'z', {"111", "001", "010", "100", "111"}},
    {'.', {"000", "000", "000", "000", "010"}}, {'_', {"000", "000", "000", "000", "111"}},
    {'-', {"000", "000", "111", "000", "000"}}, {' ', {"000", "000", "000", "000", "000"}},
}};
// clang-format on

inline const Glyph* find_glyph(char c) {
  for (const auto& g : kFont) {
    if (g.c == c) return &g;
  }
  return nullptr;
}

inline void put(Image& img, long x, long y, std::uint8_t v) {
  if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) return;
  img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = v;
}

}  // namespace detail

inline constexpr long kGlyphWidth = 3;
inline constexpr long kGlyphHeight = 5;

// Pixel width of `text` at the given scale (one blank column between glyphs).
inline long text_width(std::string_view text, long scale = 1) {
  return text.empty() ? 0 : static_cast<long>(text.size()) * (kGlyphWidth + 1) * scale - scale;
}

// Unknown characters render as blanks. Clipped at the image border.
inline void draw_text(Image& img, long x, long y, std::string_view text, std::uint8_t value, long scale = 1) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto* g = detail::find_glyph(text[i]);
    if (!g) continue;
    const long ox = x + static_cast<long>(i) * (kGlyphWidth + 1) * scale;
    for (long r = 0; r < kGlyphHeight; ++r) {
      for (long c = 0; c < kGlyphWidth; ++c) {
        if (g->rows[static_cast<std::size_t>(r)][c] != '1') continue;
        for (long dy = 0; dy < scale; ++dy) {
          for (long dx = 0; dx < scale; ++dx) detail::put(img, ox + c * scale + dx, y + r * scale + dy, value);
        }
      }
    }
  }
}

inline void fill_rect(Image& img, long x0, long y0, long x1, long y1, std::uint8_t value) {
  for (long y = y0; y < y1; ++y) {
    for (long x = x0; x < x1; ++x) detail::put(img, x, y, value);
  }
}

inline void draw_box(Image& img, const Box& b, std::uint8_t value, long thickness = 1) {
  const long x0 = std::lround(b.x1()), y0 = std::lround(b.y1());
  const long x1 = std::lround(b.x2()), y1 = std::lround(b.y2());
  fill_rect(img, x0, y0, x1, y0 + thickness, value);
  fill_rect(img, x0, y1 - thickness, x1, y1, value);
  fill_rect(img, x0, y0, x0 + thickness, y1, value);
  fill_rect(img, x1 - thickness, y0, x1, y1, value);
}

// White outline with a "<class> <confidence>" tag above the box (inside it
// when the box touches the top edge).
inline void draw_detection(Image& img, const Box& b, const std::string& label, double confidence) {
  const long scale = std::max<long>(1, static_cast<long>(std::min(img.width, img.height)) / 300);
  draw_box(img, b, 255, scale);
  char conf[16];
  std::snprintf(conf, sizeof(conf), " %.2f", confidence);
  const std::string text = label + conf;
  const long h = (kGlyphHeight + 2) * scale;
  const long x = std::lround(b.x1());
  long y = std::lround(b.y1()) - h;
  if (y < 0) y = std::lround(b.y1());
  fill_rect(img, x, y, x + text_width(text, scale) + 2 * scale, y + h, 0);
  draw_text(img, x + scale, y + scale, text, 255, scale);
}

}  // namespace gbh::data
