// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

/// @file ops.hpp
/// Forward operators with reverse-mode rules. Every op allocates a fresh
/// output; inputs are never written except BN running statistics.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "gbh/core/conv_kernels.hpp"
#include "gbh/core/tensor.hpp"

namespace gbh {

enum class ConvAlgorithm { kAuto, kDirect, kGemm };

namespace detail {

// Reduction accumulator: at least double, wider for long double.
template <typename T>
using accum_t = std::common_type_t<T, double>;

template <typename T>
bool wants_grad(std::initializer_list<const Tensor<T>*> inputs) {
  if (active_tape<T>() == nullptr) return false;
  for (const auto* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
void check_finite([[maybe_unused]] const Tensor<T>& y, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  for (T v : y.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite output");
  }
#endif
}

inline std::size_t out_extent(const char* op, const char* axis, std::size_t in,
                              std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw SpecError(std::string(op) + ": stride must be positive");
  if (in + 2 * pad < k) {
    throw DimensionError(op, axis,
                         "extent " + std::to_string(in) + " + 2*pad " +
                             std::to_string(pad) + " < kernel " + std::to_string(k));
  }
  return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
void require_rank4(const char* op, const Tensor<T>& x) {
  if (x.ndim() != 4) {
    throw DimensionError(op, "rank", "expected NCHW, got " + to_string(x.shape()));
  }
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(op, "shape", to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

template <typename T>
void accumulate(TensorImpl<T>& dst, const std::vector<T>& src) {
  dst.ensure_grad();
  for (std::size_t i = 0; i < src.size(); ++i) dst.grad[i] += src[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolutions

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding,
                 ConvAlgorithm algo = ConvAlgorithm::kAuto) {
  detail::require_rank4("conv2d", x);
  detail::require_rank4("conv2d", weight);
  if (weight.dim(1) != x.dim(1)) {
    throw DimensionError("conv2d", "channels",
                         "weight expects " + std::to_string(weight.dim(1)) +
                             " input channels, input has " + std::to_string(x.dim(1)));
  }
  if (weight.dim(2) != weight.dim(3)) {
    throw DimensionError("conv2d", "kernel", "non-square kernel " + to_string(weight.shape()));
  }
  if (bias.defined() && (bias.numel() != weight.dim(0))) {
    throw DimensionError("conv2d", "bias", "bias length " + std::to_string(bias.numel()) +
                                               " != out channels " + std::to_string(weight.dim(0)));
  }
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.out_channels = weight.dim(0);
  g.kernel = weight.dim(2);
  g.stride = stride;
  g.pad = padding;
  g.out_height = detail::out_extent("conv2d", "height", g.height, g.kernel, stride, padding);
  g.out_width = detail::out_extent("conv2d", "width", g.width, g.kernel, stride, padding);

  Tensor<T> y(Shape{g.batch, g.out_channels, g.out_height, g.out_width});
  const T* bp = bias.defined() ? bias.data().data() : nullptr;
  if (algo == ConvAlgorithm::kDirect) {
    kernels::conv2d_forward_direct(x.data().data(), weight.data().data(), bp, g, y.data().data());
  } else {
    kernels::conv2d_forward_gemm(x.data().data(), weight.data().data(), bp, g, y.data().data());
  }
  detail::check_finite(y, "conv2d");

  if (detail::wants_grad({&x, &weight, &bias})) {
    y.set_requires_grad();
    active_tape<T>()->record(
        "conv2d", [xi = x.impl(), wi = weight.impl(), bi = bias.impl(), yi = y.impl(), g] {
          if (yi->grad.empty()) return;
          T* gx = nullptr;
          T* gw = nullptr;
          T* gb = nullptr;
          if (xi->requires_grad) {
            xi->ensure_grad();
            gx = xi->grad.data();
          }
          if (wi->requires_grad) {
            wi->ensure_grad();
            gw = wi->grad.data();
          }
          if (bi && bi->requires_grad) {
            bi->ensure_grad();
            gb = bi->grad.data();
          }
          kernels::conv2d_backward_gemm(xi->data.data(), wi->data.data(), yi->grad.data(), g,
                                        gx, gw, gb);
        });
  }
  return y;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, std::size_t stride,
                 std::size_t padding, ConvAlgorithm algo = ConvAlgorithm::kAuto) {
  return conv2d(x, weight, Tensor<T>(), stride, padding, algo);
}

// weight: [C*M, 1, d, d]; output channel o reads input channel o / M.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& weight, std::size_t stride,
                           std::size_t padding) {
  detail::require_rank4("depthwise_conv2d", x);
  detail::require_rank4("depthwise_conv2d", weight);
  const std::size_t c = x.dim(1);
  if (weight.dim(1) != 1 || weight.dim(0) == 0 || weight.dim(0) % c != 0) {
    throw DimensionError("depthwise_conv2d", "channels",
                         "weight " + to_string(weight.shape()) +
                             " is not a per-channel filter bank for " + std::to_string(c) +
                             " channels");
  }
  if (weight.dim(2) != weight.dim(3)) {
    throw DimensionError("depthwise_conv2d", "kernel",
                         "non-square kernel " + to_string(weight.shape()));
  }
  kernels::DepthwiseGeometry g;
  g.batch = x.dim(0);
  g.channels = c;
  g.multiplier = weight.dim(0) / c;
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.kernel = weight.dim(2);
  g.stride = stride;
  g.pad = padding;
  g.out_height = detail::out_extent("depthwise_conv2d", "height", g.height, g.kernel, stride, padding);
  g.out_width = detail::out_extent("depthwise_conv2d", "width", g.width, g.kernel, stride, padding);

  Tensor<T> y(Shape{g.batch, g.out_channels(), g.out_height, g.out_width});
  kernels::depthwise_forward(x.data().data(), weight.data().data(), g, y.data().data());
  detail::check_finite(y, "depthwise_conv2d");

  if (detail::wants_grad({&x, &weight})) {
    y.set_requires_grad();
    active_tape<T>()->record("depthwise_conv2d", [xi = x.impl(), wi = weight.impl(),
                                                  yi = y.impl(), g] {
      if (yi->grad.empty()) return;
      T* gx = nullptr;
      T* gw = nullptr;
      if (xi->requires_grad) {
        xi->ensure_grad();
        gx = xi->grad.data();
      }
      if (wi->requires_grad) {
        wi->ensure_grad();
        gw = wi->grad.data();
      }
      kernels::depthwise_backward(xi->data.data(), wi->data.data(), yi->grad.data(), g, gx, gw);
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Batch normalization

struct BatchNormOptions {
  bool training = false;
  double momentum = 0.03;
  double eps = 1e-5;
};

// Training mode normalizes by batch statistics (biased variance) and folds
// them into the running buffers; inference mode uses the running buffers.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var,
                     const BatchNormOptions& opt = {}) {
  using Acc = detail::accum_t<T>;
  detail::require_rank4("batch_norm", x);
  const std::size_t nb = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  for (const Tensor<T>* t : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &running_mean, &running_var}) {
    if (t->numel() != c) {
      throw DimensionError("batch_norm", "channels",
                           "parameter length " + std::to_string(t->numel()) +
                               " != channels " + std::to_string(c));
    }
  }
  const std::size_t count = nb * plane;
  std::vector<T> mean(c), invstd(c);
  const auto xs = x.data();
  if (opt.training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      Acc s = 0;
      for (std::size_t n = 0; n < nb; ++n) {
        const T* p = xs.data() + (n * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const Acc m = s / static_cast<Acc>(count);
      Acc v = 0;
      for (std::size_t n = 0; n < nb; ++n) {
        const T* p = xs.data() + (n * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
      }
      const Acc var = v / static_cast<Acc>(count);
      mean[ch] = static_cast<T>(m);
      invstd[ch] = static_cast<T>(Acc(1) / std::sqrt(var + opt.eps));
      const Acc unbiased = count > 1 ? v / static_cast<Acc>(count - 1) : var;
      running_mean[ch] = static_cast<T>((1 - opt.momentum) * running_mean[ch] + opt.momentum * m);
      running_var[ch] =
          static_cast<T>((1 - opt.momentum) * running_var[ch] + opt.momentum * unbiased);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      invstd[ch] = static_cast<T>(Acc(1) / std::sqrt(static_cast<Acc>(running_var[ch]) + opt.eps));
    }
  }

  Tensor<T> y(x.shape());
  auto ys = y.data();
  for (std::size_t n = 0; n < nb; ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (n * c + ch) * plane;
      const T a = gamma[ch] * invstd[ch];
      const T b = beta[ch] - mean[ch] * a;
      for (std::size_t i = 0; i < plane; ++i) ys[off + i] = xs[off + i] * a + b;
    }
  }
  detail::check_finite(y, "batch_norm");

  if (detail::wants_grad({&x, &gamma, &beta})) {
    y.set_requires_grad();
    active_tape<T>()->record(
        "batch_norm", [xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), yi = y.impl(),
                       mean = std::move(mean), invstd = std::move(invstd), nb, c, plane,
                       training = opt.training] {
          if (yi->grad.empty()) return;
          const auto& gy = yi->grad;
          const auto& xv = xi->data;
          const Acc cnt = static_cast<Acc>(nb * plane);
          if (gi->requires_grad) gi->ensure_grad();
          if (bi->requires_grad) bi->ensure_grad();
          if (xi->requires_grad) xi->ensure_grad();
          for (std::size_t ch = 0; ch < c; ++ch) {
            Acc sum_gy = 0, sum_gy_xhat = 0;
            for (std::size_t n = 0; n < nb; ++n) {
              const std::size_t off = (n * c + ch) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                const Acc xhat = (xv[off + i] - mean[ch]) * invstd[ch];
                sum_gy += gy[off + i];
                sum_gy_xhat += gy[off + i] * xhat;
              }
            }
            if (gi->requires_grad) gi->grad[ch] += static_cast<T>(sum_gy_xhat);
            if (bi->requires_grad) bi->grad[ch] += static_cast<T>(sum_gy);
            if (!xi->requires_grad) continue;
            const Acc scale = static_cast<Acc>(gi->data[ch]) * invstd[ch];
            for (std::size_t n = 0; n < nb; ++n) {
              const std::size_t off = (n * c + ch) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                if (training) {
                  const Acc xhat = (xv[off + i] - mean[ch]) * invstd[ch];
                  xi->grad[off + i] += static_cast<T>(
                      scale * (gy[off + i] - sum_gy / cnt - xhat * sum_gy_xhat / cnt));
                } else {
                  xi->grad[off + i] += static_cast<T>(scale * gy[off + i]);
                }
              }
            }
          }
        });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {

template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const char* op, const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  Tensor<T> y(x.shape());
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = fwd(xs[i]);
  check_finite(y, op);
  if (wants_grad({&x})) {
    y.set_requires_grad();
    active_tape<T>()->record(op, [xi = x.impl(), yi = y.impl(), deriv] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      xi->ensure_grad();
      for (std::size_t i = 0; i < yi->grad.size(); ++i) {
        xi->grad[i] += yi->grad[i] * deriv(xi->data[i], yi->data[i]);
      }
    });
  }
  return y;
}

template <typename T>
T sigmoid_scalar(T v) {
  return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

}  // namespace detail

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      "sigmoid", x, [](T v) { return detail::sigmoid_scalar(v); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return detail::unary(
      "silu", x, [](T v) { return v * detail::sigmoid_scalar(v); },
      [](T v, T) {
        const T s = detail::sigmoid_scalar(v);
        return s * (T(1) + v * (T(1) - s));
      });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return detail::unary(
      "scale", x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a, b);
  Tensor<T> y(a.shape());
  auto as = a.data();
  auto bs = b.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = as[i] + bs[i];
  detail::check_finite(y, "add");
  if (detail::wants_grad({&a, &b})) {
    y.set_requires_grad();
    active_tape<T>()->record("add", [ai = a.impl(), bi = b.impl(), yi = y.impl()] {
      if (yi->grad.empty()) return;
      if (ai->requires_grad) detail::accumulate(*ai, yi->grad);
      if (bi->requires_grad) detail::accumulate(*bi, yi->grad);
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a, b);
  Tensor<T> y(a.shape());
  auto as = a.data();
  auto bs = b.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = as[i] * bs[i];
  detail::check_finite(y, "mul");
  if (detail::wants_grad({&a, &b})) {
    y.set_requires_grad();
    active_tape<T>()->record("mul", [ai = a.impl(), bi = b.impl(), yi = y.impl()] {
      if (yi->grad.empty()) return;
      const auto& gy = yi->grad;
      if (ai->requires_grad) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) ai->grad[i] += gy[i] * bi->data[i];
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) bi->grad[i] += gy[i] * ai->data[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  using Acc = detail::accum_t<T>;
  Acc s = 0;
  for (T v : x.data()) s += v;
  Tensor<T> y = Tensor<T>::scalar(static_cast<T>(s));
  if (detail::wants_grad({&x})) {
    y.set_requires_grad();
    active_tape<T>()->record("sum", [xi = x.impl(), yi = y.impl()] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      xi->ensure_grad();
      const T g = yi->grad[0];
      for (auto& v : xi->grad) v += g;
    });
  }
  return y;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// ---------------------------------------------------------------------------
// Channel plumbing

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ContractError("concat_channels: no inputs");
  for (const auto& p : parts) detail::require_rank4("concat_channels", p);
  const auto& s0 = parts[0].shape();
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s[0] != s0[0]) throw DimensionError("concat_channels", "batch", to_string(s) + " vs " + to_string(s0));
    if (s[2] != s0[2]) throw DimensionError("concat_channels", "height", to_string(s) + " vs " + to_string(s0));
    if (s[3] != s0[3]) throw DimensionError("concat_channels", "width", to_string(s) + " vs " + to_string(s0));
    channels += s[1];
  }
  const std::size_t nb = s0[0], plane = s0[2] * s0[3];
  Tensor<T> y(Shape{nb, channels, s0[2], s0[3]});
  auto ys = y.data();
  std::size_t c_off = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.dim(1);
    auto ps = p.data();
    for (std::size_t n = 0; n < nb; ++n) {
      std::copy_n(ps.data() + n * pc * plane, pc * plane,
                  ys.data() + (n * channels + c_off) * plane);
    }
    c_off += pc;
  }
  bool grad = false;
  if (active_tape<T>() != nullptr) {
    for (const auto& p : parts) grad = grad || p.requires_grad();
  }
  if (grad) {
    y.set_requires_grad();
    std::vector<std::shared_ptr<TensorImpl<T>>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    active_tape<T>()->record("concat_channels", [impls = std::move(impls), yi = y.impl(), nb,
                                                 channels, plane] {
      if (yi->grad.empty()) return;
      std::size_t off = 0;
      for (const auto& pi : impls) {
        const std::size_t pc = pi->shape[1];
        if (pi->requires_grad) {
          pi->ensure_grad();
          for (std::size_t n = 0; n < nb; ++n) {
            const T* src = yi->grad.data() + (n * channels + off) * plane;
            T* dst = pi->grad.data() + n * pc * plane;
            for (std::size_t i = 0; i < pc * plane; ++i) dst[i] += src[i];
          }
        }
        off += pc;
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat_channels(std::initializer_list<Tensor<T>> parts) {
  std::vector<Tensor<T>> v(parts);
  return concat_channels(std::span<const Tensor<T>>(v));
}

// Channels [begin, end).
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  detail::require_rank4("slice_channels", x);
  if (begin >= end || end > x.dim(1)) {
    throw DimensionError("slice_channels", "channels",
                         "range [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") outside " + std::to_string(x.dim(1)) + " channels");
  }
  const std::size_t nb = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  const std::size_t oc = end - begin;
  Tensor<T> y(Shape{nb, oc, x.dim(2), x.dim(3)});
  for (std::size_t n = 0; n < nb; ++n) {
    std::copy_n(x.data().data() + (n * c + begin) * plane, oc * plane,
                y.data().data() + n * oc * plane);
  }
  if (detail::wants_grad({&x})) {
    y.set_requires_grad();
    active_tape<T>()->record("slice_channels", [xi = x.impl(), yi = y.impl(), nb, c, oc,
                                                plane, begin] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      xi->ensure_grad();
      for (std::size_t n = 0; n < nb; ++n) {
        const T* src = yi->grad.data() + n * oc * plane;
        T* dst = xi->grad.data() + (n * c + begin) * plane;
        for (std::size_t i = 0; i < oc * plane; ++i) dst[i] += src[i];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Pooling / resampling

// Padded positions never win the max.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t k, std::size_t stride, std::size_t pad) {
  detail::require_rank4("maxpool2d", x);
  if (k == 0) throw SpecError("maxpool2d: kernel must be positive");
  if (2 * pad > k) throw SpecError("maxpool2d: padding exceeds half the kernel");
  const std::size_t nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = detail::out_extent("maxpool2d", "height", h, k, stride, pad);
  const std::size_t ow = detail::out_extent("maxpool2d", "width", w, k, stride, pad);
  Tensor<T> y(Shape{nb, c, oh, ow});
  std::vector<std::uint32_t> argmax(y.numel());
  const T* xs = x.data().data();
  T* ys = y.data().data();
  for (std::size_t plane = 0; plane < nb * c; ++plane) {
    const T* xp = xs + plane * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      const long h0 = static_cast<long>(i * stride) - static_cast<long>(pad);
      const long h_lo = std::max(h0, 0L), h_hi = std::min(h0 + static_cast<long>(k), static_cast<long>(h));
      for (std::size_t j = 0; j < ow; ++j) {
        const long w0 = static_cast<long>(j * stride) - static_cast<long>(pad);
        const long w_lo = std::max(w0, 0L), w_hi = std::min(w0 + static_cast<long>(k), static_cast<long>(w));
        T best = -std::numeric_limits<T>::infinity();
        std::uint32_t best_idx = 0;
        for (long a = h_lo; a < h_hi; ++a) {
          for (long b = w_lo; b < w_hi; ++b) {
            const auto idx = static_cast<std::uint32_t>(a * static_cast<long>(w) + b);
            if (xp[idx] > best) {
              best = xp[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (plane * oh + i) * ow + j;
        ys[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
  detail::check_finite(y, "maxpool2d");
  if (detail::wants_grad({&x})) {
    y.set_requires_grad();
    active_tape<T>()->record("maxpool2d", [xi = x.impl(), yi = y.impl(),
                                           argmax = std::move(argmax), planes = nb * c,
                                           in_plane = h * w, out_plane = oh * ow] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      xi->ensure_grad();
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t i = 0; i < out_plane; ++i) {
          xi->grad[p * in_plane + argmax[p * out_plane + i]] += yi->grad[p * out_plane + i];
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  detail::require_rank4("upsample_nearest2x", x);
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> y(Shape{x.dim(0), x.dim(1), 2 * h, 2 * w});
  const T* xs = x.data().data();
  T* ys = y.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < 2 * h; ++i) {
      for (std::size_t j = 0; j < 2 * w; ++j) {
        ys[(p * 2 * h + i) * 2 * w + j] = xs[(p * h + i / 2) * w + j / 2];
      }
    }
  }
  if (detail::wants_grad({&x})) {
    y.set_requires_grad();
    active_tape<T>()->record("upsample_nearest2x", [xi = x.impl(), yi = y.impl(), planes, h, w] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      xi->ensure_grad();
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t i = 0; i < 2 * h; ++i) {
          for (std::size_t j = 0; j < 2 * w; ++j) {
            xi->grad[(p * h + i / 2) * w + j / 2] += yi->grad[(p * 2 * h + i) * 2 * w + j];
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Focus slicing
//
// Output channel block q holds the pixel-parity sub-image with
// (row offset, col offset) = (0,0), (1,0), (0,1), (1,1) for q = 0..3, so a
// 2x2 input [[a,b],[c,d]] slices to channels a, c, b, d.

namespace detail {
inline constexpr std::size_t kFocusRow[4] = {0, 1, 0, 1};
inline constexpr std::size_t kFocusCol[4] = {0, 0, 1, 1};
}  // namespace detail

template <typename T>
Tensor<T> focus_slice(const Tensor<T>& x) {
  detail::require_rank4("focus_slice", x);
  const std::size_t nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0) throw DimensionError("focus_slice", "height", "odd extent " + std::to_string(h));
  if (w % 2 != 0) throw DimensionError("focus_slice", "width", "odd extent " + std::to_string(w));
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor<T> y(Shape{nb, 4 * c, oh, ow});
  // index map: output flat index -> input flat index
  auto map = [=](std::size_t n, std::size_t q, std::size_t ch, std::size_t i, std::size_t j) {
    const std::size_t src = ((n * c + ch) * h + 2 * i + detail::kFocusRow[q]) * w + 2 * j +
                            detail::kFocusCol[q];
    const std::size_t dst = ((n * 4 * c + q * c + ch) * oh + i) * ow + j;
    return std::pair{src, dst};
  };
  for (std::size_t n = 0; n < nb; ++n)
    for (std::size_t q = 0; q < 4; ++q)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j) {
            auto [src, dst] = map(n, q, ch, i, j);
            y[dst] = x[src];
          }
  if (detail::wants_grad({&x})) {
    y.set_requires_grad();
    active_tape<T>()->record("focus_slice", [xi = x.impl(), yi = y.impl(), map, nb, c, oh, ow] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      xi->ensure_grad();
      for (std::size_t n = 0; n < nb; ++n)
        for (std::size_t q = 0; q < 4; ++q)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < oh; ++i)
              for (std::size_t j = 0; j < ow; ++j) {
                auto [src, dst] = map(n, q, ch, i, j);
                xi->grad[src] += yi->grad[dst];
              }
    });
  }
  return y;
}

// Inverse of focus_slice. Not recorded on the tape.
template <typename T>
Tensor<T> focus_deslice(const Tensor<T>& y) {
  detail::require_rank4("focus_deslice", y);
  if (y.dim(1) % 4 != 0) {
    throw DimensionError("focus_deslice", "channels",
                         std::to_string(y.dim(1)) + " is not a multiple of 4");
  }
  const std::size_t nb = y.dim(0), c = y.dim(1) / 4, oh = y.dim(2), ow = y.dim(3);
  const std::size_t h = 2 * oh, w = 2 * ow;
  Tensor<T> x(Shape{nb, c, h, w});
  for (std::size_t n = 0; n < nb; ++n)
    for (std::size_t q = 0; q < 4; ++q)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j) {
            x[((n * c + ch) * h + 2 * i + detail::kFocusRow[q]) * w + 2 * j +
              detail::kFocusCol[q]] = y[((n * 4 * c + q * c + ch) * oh + i) * ow + j];
          }
  return x;
}

}  // namespace gbh
