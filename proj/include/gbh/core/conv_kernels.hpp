// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

// Raw convolution kernels over NCHW buffers. The direct loops are the
// reference; the im2col + GEMM path must agree with them to 1e-5 relative.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <vector>

namespace gbh::kernels {

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t out_height = 0;
  std::size_t out_width = 0;

  std::size_t patch() const { return in_channels * kernel * kernel; }
  std::size_t out_plane() const { return out_height * out_width; }
  std::size_t in_plane() const { return height * width; }
  bool is_pointwise() const { return kernel == 1 && stride == 1 && pad == 0; }
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// col has shape [C*k*k, Ho*Wo].
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const auto k = g.kernel;
  const auto plane = g.out_plane();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const T* xc = x + c * g.in_plane();
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = col + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oh = 0; oh < g.out_height; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          T* dst = row + oh * g.out_width;
          if (ih < 0 || ih >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_width, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(ih) * g.width;
          for (std::size_t ow = 0; ow < g.out_width; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.width))
                          ? T(0)
                          : src[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

// Scatter-adds col back into an image gradient buffer.
template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* gx) {
  const auto k = g.kernel;
  const auto plane = g.out_plane();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* gc = gx + c * g.in_plane();
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = col + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oh = 0; oh < g.out_height; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
          T* dst = gc + static_cast<std::size_t>(ih) * g.width;
          const T* src = row + oh * g.out_width;
          for (std::size_t ow = 0; ow < g.out_width; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            if (iw < 0 || iw >= static_cast<long>(g.width)) continue;
            dst[static_cast<std::size_t>(iw)] += src[ow];
          }
        }
      }
    }
  }
}

// Reference cross-correlation. Accumulates bias first, then c, ki, kj in
// ascending order.
template <typename T>
void conv2d_forward_direct(const T* x, const T* w, const T* bias,
                           const ConvGeometry& g, T* y) {
  const auto k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t oh = 0; oh < g.out_height; ++oh) {
        for (std::size_t ow = 0; ow < g.out_width; ++ow) {
          T acc = bias ? bias[o] : T(0);
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ki = 0; ki < k; ++ki) {
              const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
              if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
              for (std::size_t kj = 0; kj < k; ++kj) {
                const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
                if (iw < 0 || iw >= static_cast<long>(g.width)) continue;
                acc += x[((n * g.in_channels + c) * g.height + ih) * g.width + iw] *
                       w[((o * g.in_channels + c) * k + ki) * k + kj];
              }
            }
          }
          y[((n * g.out_channels + o) * g.out_height + oh) * g.out_width + ow] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward_gemm(const T* x, const T* w, const T* bias,
                         const ConvGeometry& g, T* y) {
  using Map = Eigen::Map<RowMatrix<T>>;
  using ConstMap = Eigen::Map<const RowMatrix<T>>;
  const auto patch = static_cast<Eigen::Index>(g.patch());
  const auto plane = static_cast<Eigen::Index>(g.out_plane());
  const auto outc = static_cast<Eigen::Index>(g.out_channels);
  ConstMap wm(w, outc, patch);
  std::vector<T> col;
  if (!g.is_pointwise()) col.resize(g.patch() * g.out_plane());
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* xn = x + n * g.in_channels * g.in_plane();
    const T* cp = xn;
    if (!g.is_pointwise()) {
      im2col(xn, g, col.data());
      cp = col.data();
    }
    ConstMap cm(cp, patch, plane);
    Map ym(y + n * g.out_channels * g.out_plane(), outc, plane);
    ym.noalias() = wm * cm;
    if (bias) {
      for (Eigen::Index o = 0; o < outc; ++o) ym.row(o).array() += bias[o];
    }
  }
}

// Accumulates into gx (if non-null), gw and gb (if non-null).
template <typename T>
void conv2d_backward_gemm(const T* x, const T* w, const T* gy,
                          const ConvGeometry& g, T* gx, T* gw, T* gb) {
  using Map = Eigen::Map<RowMatrix<T>>;
  using ConstMap = Eigen::Map<const RowMatrix<T>>;
  const auto patch = static_cast<Eigen::Index>(g.patch());
  const auto plane = static_cast<Eigen::Index>(g.out_plane());
  const auto outc = static_cast<Eigen::Index>(g.out_channels);
  ConstMap wm(w, outc, patch);
  std::vector<T> col;
  std::vector<T> gcol;
  if (!g.is_pointwise()) {
    col.resize(g.patch() * g.out_plane());
    if (gx) gcol.resize(col.size());
  }
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* xn = x + n * g.in_channels * g.in_plane();
    ConstMap gym(gy + n * g.out_channels * g.out_plane(), outc, plane);
    if (gb) {
      for (Eigen::Index o = 0; o < outc; ++o) gb[o] += gym.row(o).sum();
    }
    if (gw) {
      const T* cp = xn;
      if (!g.is_pointwise()) {
        im2col(xn, g, col.data());
        cp = col.data();
      }
      ConstMap cm(cp, patch, plane);
      Map gwm(gw, outc, patch);
      gwm.noalias() += gym * cm.transpose();
    }
    if (gx) {
      T* gxn = gx + n * g.in_channels * g.in_plane();
      if (g.is_pointwise()) {
        Map gxm(gxn, patch, plane);
        gxm.noalias() += wm.transpose() * gym;
      } else {
        Map gcm(gcol.data(), patch, plane);
        gcm.noalias() = wm.transpose() * gym;
        col2im_add(gcol.data(), g, gxn);
      }
    }
  }
}

// Per-channel convolution: output channel o reads input channel o / multiplier.
struct DepthwiseGeometry {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t multiplier = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t out_height = 0;
  std::size_t out_width = 0;

  std::size_t out_channels() const { return channels * multiplier; }
};

template <typename T>
void depthwise_forward(const T* x, const T* w, const DepthwiseGeometry& g, T* y) {
  const auto k = g.kernel;
  const auto oc = g.out_channels();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < oc; ++o) {
      const T* xc = x + (n * g.channels + o / g.multiplier) * g.height * g.width;
      const T* wk = w + o * k * k;
      T* yc = y + (n * oc + o) * g.out_height * g.out_width;
      for (std::size_t oh = 0; oh < g.out_height; ++oh) {
        for (std::size_t ow = 0; ow < g.out_width; ++ow) {
          T acc = 0;
          for (std::size_t ki = 0; ki < k; ++ki) {
            const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
            if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
            for (std::size_t kj = 0; kj < k; ++kj) {
              const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
              if (iw < 0 || iw >= static_cast<long>(g.width)) continue;
              acc += xc[ih * static_cast<long>(g.width) + iw] * wk[ki * k + kj];
            }
          }
          yc[oh * g.out_width + ow] = acc;
        }
      }
    }
  }
}

template <typename T>
void depthwise_backward(const T* x, const T* w, const T* gy,
                        const DepthwiseGeometry& g, T* gx, T* gw) {
  const auto k = g.kernel;
  const auto oc = g.out_channels();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < oc; ++o) {
      const std::size_t in_off = (n * g.channels + o / g.multiplier) * g.height * g.width;
      const T* xc = x + in_off;
      const T* wk = w + o * k * k;
      const T* gyc = gy + (n * oc + o) * g.out_height * g.out_width;
      for (std::size_t oh = 0; oh < g.out_height; ++oh) {
        for (std::size_t ow = 0; ow < g.out_width; ++ow) {
          const T go = gyc[oh * g.out_width + ow];
          if (go == T(0)) continue;
          for (std::size_t ki = 0; ki < k; ++ki) {
            const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
            if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
            for (std::size_t kj = 0; kj < k; ++kj) {
              const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
              if (iw < 0 || iw >= static_cast<long>(g.width)) continue;
              const auto xi = static_cast<std::size_t>(ih * static_cast<long>(g.width) + iw);
              if (gw) gw[o * k * k + ki * k + kj] += go * xc[xi];
              if (gx) gx[in_off + xi] += go * wk[ki * k + kj];
            }
          }
        }
      }
    }
  }
}

}  // namespace gbh::kernels
