// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

/// @file blocks.hpp
/// Composite blocks: Focus, ConvBnAct, GhostConv, Bottleneck,
/// BottleneckCSP, C3 and SPP.
///
/// Module counting rule used by `module_count()`: every conv, BN,
/// activation, pool, upsample and concat node counts as one module.
/// Channel slices, residual additions and the Focus pixel-parity slice are
/// free.

#pragma once

#include <array>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gbh/core/ops.hpp"
#include "gbh/nn/module.hpp"

namespace gbh::nn {

namespace detail {

inline std::size_t conv_out(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  return (in + 2 * p - k) / s + 1;
}

}  // namespace detail

template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, std::size_t padding, bool with_bias, std::mt19937_64& rng)
      : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(padding) {
    const std::size_t fan_in = in_channels * kernel * kernel;
    weight_ = this->register_parameter(
        "weight", uniform_init<T>({out_channels, in_channels, kernel, kernel}, fan_in, rng));
    if (with_bias) {
      bias_ = this->register_parameter("bias", uniform_init<T>({out_channels}, fan_in, rng));
    }
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    return conv2d(x, weight_, bias_, stride_, pad_);
  }

  FlopCount flops(const Shape& in) const override {
    const auto oh = detail::conv_out(in[2], k_, stride_, pad_);
    const auto ow = detail::conv_out(in[3], k_, stride_, pad_);
    return {2ull * k_ * k_ * in_ * out_ * oh * ow * in[0], {in[0], out_, oh, ow}};
  }

  std::size_t own_module_count() const override { return 1; }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }

 private:
  std::size_t in_, out_, k_, stride_, pad_;
  Tensor<T> weight_;
  Tensor<T> bias_;
};

// One filter of size d x d per output channel; output channel o reads input
// channel o / multiplier.
template <typename T>
class DepthwiseConv2d : public Module<T> {
 public:
  DepthwiseConv2d(std::size_t channels, std::size_t multiplier, std::size_t kernel,
                  std::mt19937_64& rng)
      : channels_(channels), multiplier_(multiplier), k_(kernel) {
    weight_ = this->register_parameter(
        "weight", uniform_init<T>({channels * multiplier, 1, kernel, kernel}, kernel * kernel, rng));
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    return depthwise_conv2d(x, weight_, 1, k_ / 2);
  }

  FlopCount flops(const Shape& in) const override {
    const std::size_t oc = channels_ * multiplier_;
    return {2ull * k_ * k_ * oc * in[2] * in[3] * in[0], {in[0], oc, in[2], in[3]}};
  }

  std::size_t own_module_count() const override { return 1; }
  Tensor<T>& weight() { return weight_; }

 private:
  std::size_t channels_, multiplier_, k_;
  Tensor<T> weight_;
};

template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  explicit BatchNorm2d(std::size_t channels, double momentum = 0.03, double eps = 1e-5)
      : momentum_(momentum), eps_(eps) {
    gamma_ = this->register_parameter("weight", Tensor<T>::ones({channels}));
    beta_ = this->register_parameter("bias", Tensor<T>::zeros({channels}));
    running_mean_ = this->register_buffer("running_mean", Tensor<T>::zeros({channels}));
    running_var_ = this->register_buffer("running_var", Tensor<T>::ones({channels}));
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    BatchNormOptions opt;
    opt.training = this->training();
    opt.momentum = momentum_;
    opt.eps = eps_;
    return batch_norm(x, gamma_, beta_, running_mean_, running_var_, opt);
  }

  FlopCount flops(const Shape& in) const override { return {0, in}; }
  std::size_t own_module_count() const override { return 1; }

  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

 private:
  double momentum_, eps_;
  Tensor<T> gamma_, beta_, running_mean_, running_var_;
};

// conv (no bias) -> BN -> SiLU, "same" padding for odd kernels.
template <typename T>
class ConvBnAct : public Module<T> {
 public:
  ConvBnAct(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
            std::size_t stride, std::mt19937_64& rng, bool activation = true)
      : activation_(activation) {
    conv_ = this->register_module(
        "conv", std::make_unique<Conv2d<T>>(in_channels, out_channels, kernel, stride,
                                            kernel / 2, false, rng));
    bn_ = this->register_module("bn", std::make_unique<BatchNorm2d<T>>(out_channels));
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    auto y = bn_->forward(conv_->forward(x));
    return activation_ ? silu(y) : y;
  }

  FlopCount flops(const Shape& in) const override { return conv_->flops(in); }
  std::size_t own_module_count() const override { return activation_ ? 1 : 0; }

  Conv2d<T>& conv() { return *conv_; }
  BatchNorm2d<T>& bn() { return *bn_; }
  std::size_t out_channels() const { return conv_->out_channels(); }

 private:
  bool activation_;
  Conv2d<T>* conv_;
  BatchNorm2d<T>* bn_;
};

struct GhostConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t ratio = 2;           // s
  std::size_t primary_kernel = 1;  // k
  std::size_t cheap_kernel = 3;    // d
  std::size_t stride = 1;

  // m = ceil(n / s)
  std::size_t intrinsic_channels() const { return (out_channels + ratio - 1) / ratio; }

  void validate() const {
    if (ratio < 2) throw SpecError("GhostConv: ratio s must be >= 2, got " + std::to_string(ratio));
    if (out_channels < ratio) {
      throw SpecError("GhostConv: out_channels " + std::to_string(out_channels) +
                      " < ratio " + std::to_string(ratio));
    }
    if (in_channels == 0) throw SpecError("GhostConv: in_channels must be positive");
    if (primary_kernel % 2 == 0 || cheap_kernel % 2 == 0) {
      throw SpecError("GhostConv: kernels must be odd");
    }
    if (stride == 0) throw SpecError("GhostConv: stride must be positive");
  }
};

// Y' = primary k x k ConvBnAct producing m intrinsic maps; each intrinsic map
// i also yields s-1 cheap maps through its own d x d depthwise filter (a
// linear transform). Output = concat(Y', cheap) truncated to n channels, so
// Y' itself passes through unchanged.
template <typename T>
class GhostConv : public Module<T> {
 public:
  GhostConv(const GhostConvSpec& spec, std::mt19937_64& rng) : spec_(spec) {
    spec.validate();
    const std::size_t m = spec.intrinsic_channels();
    primary_ = this->register_module(
        "primary", std::make_unique<ConvBnAct<T>>(spec.in_channels, m, spec.primary_kernel,
                                                  spec.stride, rng));
    cheap_ = this->register_module(
        "cheap", std::make_unique<DepthwiseConv2d<T>>(m, spec.ratio - 1, spec.cheap_kernel, rng));
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    auto intrinsic = primary_->forward(x);
    auto ghosts = cheap_->forward(intrinsic);
    auto y = concat_channels<T>({intrinsic, ghosts});
    if (y.dim(1) == spec_.out_channels) return y;
    return slice_channels(y, 0, spec_.out_channels);
  }

  FlopCount flops(const Shape& in) const override {
    auto p = primary_->flops(in);
    auto c = cheap_->flops(p.out);
    return {p.flops + c.flops, {in[0], spec_.out_channels, p.out[2], p.out[3]}};
  }

  std::size_t own_module_count() const override { return 1; }  // concat

  // Convolution weights only (primary + cheap), excluding BN.
  std::size_t conv_weight_count() const {
    return primary_->conv().weight().numel() + cheap_->weight().numel();
  }

  const GhostConvSpec& spec() const { return spec_; }
  ConvBnAct<T>& primary() { return *primary_; }
  DepthwiseConv2d<T>& cheap() { return *cheap_; }

 private:
  GhostConvSpec spec_;
  ConvBnAct<T>* primary_;
  DepthwiseConv2d<T>* cheap_;
};

// Which standard convolutions get swapped for GhostConv.
struct ConvPolicy {
  bool ghost = false;
  std::size_t ghost_ratio = 2;
  std::size_t cheap_kernel = 3;
};

// ConvBnAct, or GhostConv when the policy asks for it and the conv is
// stride-preserving.
template <typename T>
std::unique_ptr<Module<T>> make_conv(std::size_t c1, std::size_t c2, std::size_t k,
                                     std::size_t s, const ConvPolicy& policy,
                                     std::mt19937_64& rng) {
  if (policy.ghost && s == 1 && c2 >= policy.ghost_ratio) {
    GhostConvSpec spec;
    spec.in_channels = c1;
    spec.out_channels = c2;
    spec.ratio = policy.ghost_ratio;
    spec.primary_kernel = k;
    spec.cheap_kernel = policy.cheap_kernel;
    spec.stride = s;
    return std::make_unique<GhostConv<T>>(spec, rng);
  }
  return std::make_unique<ConvBnAct<T>>(c1, c2, k, s, rng);
}

// Pixel-parity slice followed by a k x k convolution.
template <typename T>
class Focus : public Module<T> {
 public:
  Focus(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
        const ConvPolicy& policy, std::mt19937_64& rng) {
    conv_ = this->register_module("conv",
                                  make_conv<T>(4 * in_channels, out_channels, kernel, 1, policy, rng));
  }

  Tensor<T> forward(const Tensor<T>& x) override { return conv_->forward(focus_slice(x)); }

  FlopCount flops(const Shape& in) const override {
    return conv_->flops({in[0], in[1] * 4, in[2] / 2, in[3] / 2});
  }

 private:
  Module<T>* conv_;
};

// y = x + cv2(cv1(x)) with shortcut, else cv2(cv1(x)); cv1 is 1x1, cv2 3x3.
template <typename T>
class Bottleneck : public Module<T> {
 public:
  Bottleneck(std::size_t in_channels, std::size_t out_channels, bool shortcut,
             const ConvPolicy& policy, std::mt19937_64& rng, double expansion = 1.0)
      : shortcut_(shortcut) {
    if (shortcut && in_channels != out_channels) {
      throw SpecError("Bottleneck: shortcut needs equal channels, got " +
                      std::to_string(in_channels) + " -> " + std::to_string(out_channels));
    }
    const auto hidden = std::max<std::size_t>(
        1, static_cast<std::size_t>(static_cast<double>(out_channels) * expansion));
    cv1_ = this->register_module("cv1", make_conv<T>(in_channels, hidden, 1, 1, policy, rng));
    cv2_ = this->register_module("cv2", make_conv<T>(hidden, out_channels, 3, 1, policy, rng));
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    auto y = cv2_->forward(cv1_->forward(x));
    return shortcut_ ? add(x, y) : y;
  }

  FlopCount flops(const Shape& in) const override {
    auto a = cv1_->flops(in);
    auto b = cv2_->flops(a.out);
    return {a.flops + b.flops, b.out};
  }

  Module<T>& cv1() { return *cv1_; }
  Module<T>& cv2() { return *cv2_; }

 private:
  bool shortcut_;
  Module<T>* cv1_;
  Module<T>* cv2_;
};

struct CspSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  double hidden_fraction = 0.5;
  std::size_t repeats = 1;
  bool shortcut = true;

  std::size_t hidden_channels() const {
    return static_cast<std::size_t>(static_cast<double>(out_channels) * hidden_fraction);
  }

  void validate(const char* block) const {
    if (in_channels == 0 || out_channels == 0) {
      throw SpecError(std::string(block) + ": channel counts must be positive");
    }
    if (hidden_channels() < 1) throw SpecError(std::string(block) + ": hidden channels < 1");
    if (repeats < 1) throw SpecError(std::string(block) + ": repeat count < 1");
  }
};

// Path A: cv1 (1x1) -> bottleneck stack -> cv3 (plain 1x1 transition).
// Path B: cv2 (plain 1x1) on the input.
// Merge: concat -> BN -> SiLU -> cv4 (1x1 ConvBnAct).
template <typename T>
class BottleneckCSP : public Module<T> {
 public:
  BottleneckCSP(const CspSpec& spec, const ConvPolicy& policy, std::mt19937_64& rng)
      : spec_(spec) {
    spec.validate("BottleneckCSP");
    const std::size_t c = spec.hidden_channels();
    cv1_ = this->register_module("cv1", make_conv<T>(spec.in_channels, c, 1, 1, policy, rng));
    cv2_ = this->register_module(
        "cv2", std::make_unique<Conv2d<T>>(spec.in_channels, c, 1, 1, 0, false, rng));
    cv3_ = this->register_module("cv3", std::make_unique<Conv2d<T>>(c, c, 1, 1, 0, false, rng));
    cv4_ = this->register_module("cv4", make_conv<T>(2 * c, spec.out_channels, 1, 1, policy, rng));
    bn_ = this->register_module("bn", std::make_unique<BatchNorm2d<T>>(2 * c));
    for (std::size_t i = 0; i < spec.repeats; ++i) {
      m_.push_back(this->register_module(
          "m." + std::to_string(i),
          std::make_unique<Bottleneck<T>>(c, c, spec.shortcut, policy, rng)));
    }
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    auto a = cv1_->forward(x);
    for (auto* b : m_) a = b->forward(a);
    a = cv3_->forward(a);
    auto b = cv2_->forward(x);
    return cv4_->forward(silu(bn_->forward(concat_channels<T>({a, b}))));
  }

  FlopCount flops(const Shape& in) const override {
    auto a = cv1_->flops(in);
    std::uint64_t total = a.flops;
    Shape s = a.out;
    for (auto* b : m_) {
      auto f = b->flops(s);
      total += f.flops;
      s = f.out;
    }
    total += cv3_->flops(s).flops + cv2_->flops(in).flops;
    auto merged = cv4_->flops({in[0], 2 * spec_.hidden_channels(), in[2], in[3]});
    return {total + merged.flops, merged.out};
  }

  std::size_t own_module_count() const override { return 2; }  // concat + activation

  Conv2d<T>& transition() { return *cv3_; }
  Conv2d<T>& bypass() { return *cv2_; }
  Module<T>& entry() { return *cv1_; }
  const CspSpec& spec() const { return spec_; }

 private:
  CspSpec spec_;
  Module<T>* cv1_;
  Conv2d<T>* cv2_;
  Conv2d<T>* cv3_;
  Module<T>* cv4_;
  BatchNorm2d<T>* bn_;
  std::vector<Bottleneck<T>*> m_;
};

// C3: cv3(concat(m(cv1(x)), cv2(x))), all three 1x1 ConvBnAct; no separate
// transition conv and no BN at the merge.
template <typename T>
class C3 : public Module<T> {
 public:
  C3(const CspSpec& spec, const ConvPolicy& policy, std::mt19937_64& rng) : spec_(spec) {
    spec.validate("C3");
    const std::size_t c = spec.hidden_channels();
    cv1_ = this->register_module("cv1", make_conv<T>(spec.in_channels, c, 1, 1, policy, rng));
    cv2_ = this->register_module("cv2", make_conv<T>(spec.in_channels, c, 1, 1, policy, rng));
    cv3_ = this->register_module("cv3", make_conv<T>(2 * c, spec.out_channels, 1, 1, policy, rng));
    for (std::size_t i = 0; i < spec.repeats; ++i) {
      m_.push_back(this->register_module(
          "m." + std::to_string(i),
          std::make_unique<Bottleneck<T>>(c, c, spec.shortcut, policy, rng)));
    }
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    auto a = cv1_->forward(x);
    for (auto* b : m_) a = b->forward(a);
    auto b = cv2_->forward(x);
    return cv3_->forward(concat_channels<T>({a, b}));
  }

  FlopCount flops(const Shape& in) const override {
    auto a = cv1_->flops(in);
    std::uint64_t total = a.flops;
    Shape s = a.out;
    for (auto* b : m_) {
      auto f = b->flops(s);
      total += f.flops;
      s = f.out;
    }
    total += cv2_->flops(in).flops;
    auto merged = cv3_->flops({in[0], 2 * spec_.hidden_channels(), in[2], in[3]});
    return {total + merged.flops, merged.out};
  }

  std::size_t own_module_count() const override { return 1; }  // concat

  Module<T>& entry() { return *cv1_; }
  Module<T>& bypass() { return *cv2_; }
  const std::vector<Bottleneck<T>*>& bottlenecks() const { return m_; }

 private:
  CspSpec spec_;
  Module<T>* cv1_;
  Module<T>* cv2_;
  Module<T>* cv3_;
  std::vector<Bottleneck<T>*> m_;
};

// cv2(concat(r, maxpool_5(r), maxpool_9(r), maxpool_13(r))) with r = cv1(x);
// pools are stride 1 with "same" padding.
template <typename T>
class SPP : public Module<T> {
 public:
  SPP(std::size_t in_channels, std::size_t out_channels, const ConvPolicy& policy,
      std::mt19937_64& rng, std::array<std::size_t, 3> kernels = {5, 9, 13})
      : kernels_(kernels) {
    const std::size_t c = std::max<std::size_t>(1, in_channels / 2);
    hidden_ = c;
    cv1_ = this->register_module("cv1", make_conv<T>(in_channels, c, 1, 1, policy, rng));
    cv2_ = this->register_module("cv2", make_conv<T>(c * (kernels.size() + 1), out_channels, 1,
                                                     1, policy, rng));
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.ndim() != 4 || x.dim(2) == 0 || x.dim(3) == 0) {
      throw DimensionError("spp", "height", "empty spatial extent in " + to_string(x.shape()));
    }
    auto r = cv1_->forward(x);
    std::vector<Tensor<T>> parts{r};
    for (auto k : kernels_) parts.push_back(maxpool2d(r, k, 1, k / 2));
    return cv2_->forward(concat_channels(std::span<const Tensor<T>>(parts)));
  }

  FlopCount flops(const Shape& in) const override {
    auto a = cv1_->flops(in);
    auto b = cv2_->flops({in[0], hidden_ * (kernels_.size() + 1), in[2], in[3]});
    return {a.flops + b.flops, b.out};
  }

  std::size_t own_module_count() const override { return kernels_.size() + 1; }  // pools + concat

 private:
  std::array<std::size_t, 3> kernels_;
  std::size_t hidden_ = 0;
  Module<T>* cv1_;
  Module<T>* cv2_;
};

}  // namespace gbh::nn
