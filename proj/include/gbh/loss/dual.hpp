// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

// Forward-mode dual numbers with N tangent directions. Used to get exact
// gradients of small scalar geometry functions (CIoU) without a tape.

#pragma once

#include <array>
#include <cmath>

namespace gbh {

template <typename T, int N>
struct Dual {
  T v = 0;
  std::array<T, N> d{};

  Dual() = default;
  Dual(T value) : v(value) {}  // NOLINT: implicit constant promotion

  static Dual variable(T value, int index) {
    Dual x(value);
    x.d[index] = T(1);
    return x;
  }

  friend Dual operator+(const Dual& a, const Dual& b) {
    Dual r(a.v + b.v);
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] + b.d[i];
    return r;
  }
  friend Dual operator-(const Dual& a, const Dual& b) {
    Dual r(a.v - b.v);
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] - b.d[i];
    return r;
  }
  friend Dual operator-(const Dual& a) {
    Dual r(-a.v);
    for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
    return r;
  }
  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r(a.v * b.v);
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    Dual r(a.v / b.v);
    const T inv2 = T(1) / (b.v * b.v);
    for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) * inv2;
    return r;
  }
  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
};

template <typename T, int N>
Dual<T, N> atan(const Dual<T, N>& x) {
  Dual<T, N> r(std::atan(x.v));
  const T s = T(1) / (T(1) + x.v * x.v);
  for (int i = 0; i < N; ++i) r.d[i] = x.d[i] * s;
  return r;
}

template <typename T, int N>
Dual<T, N> exp(const Dual<T, N>& x) {
  Dual<T, N> r(std::exp(x.v));
  for (int i = 0; i < N; ++i) r.d[i] = x.d[i] * r.v;
  return r;
}

inline double value_of(double x) { return x; }
inline float value_of(float x) { return x; }
template <typename T, int N>
T value_of(const Dual<T, N>& x) {
  return x.v;
}

}  // namespace gbh
