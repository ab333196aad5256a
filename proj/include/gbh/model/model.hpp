// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

/// @file model.hpp
/// Assembles the four detector variants from a declarative layer table.
///
/// Backbone: Focus -> strided convs with CSP stages at strides 4/8/16/32 ->
/// SPP -> CSP. Neck: FPN top-down (upsample + concat with backbone taps),
/// then PAN bottom-up (strided conv + concat). Four-head variants extend the
/// top-down path one level further to the stride-4 backbone stage and add a
/// stride-4 prediction head.

#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gbh/model/variant.hpp"
#include "gbh/nn/blocks.hpp"

namespace gbh::model {

using gbh::to_string;

enum class BlockKind { kFocus, kConv, kCsp, kSpp, kUpsample, kConcat, kDetect };

inline const char* to_string(BlockKind k) {
  switch (k) {
    case BlockKind::kFocus: return "Focus";
    case BlockKind::kConv: return "Conv";
    case BlockKind::kCsp: return "CSP";
    case BlockKind::kSpp: return "SPP";
    case BlockKind::kUpsample: return "Upsample";
    case BlockKind::kConcat: return "Concat";
    case BlockKind::kDetect: return "Detect";
  }
  return "?";
}

// One node of the network graph. `from` holds absolute layer indices, or -1
// for the previous layer. Channel counts are pre-width-multiple.
struct LayerSpec {
  BlockKind kind;
  std::vector<int> from;
  std::size_t channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t repeats = 1;
  bool shortcut = true;
};

inline std::vector<LayerSpec> layer_table(const ModelVariant& v) {
  using K = BlockKind;
  std::vector<LayerSpec> t = {
      {K::kFocus, {-1}, 64, 3, 1, 1, true},     // 0  stride 2
      {K::kConv, {-1}, 128, 3, 2, 1, true},     // 1  stride 4
      {K::kCsp, {-1}, 128, 1, 1, 3, true},      // 2
      {K::kConv, {-1}, 256, 3, 2, 1, true},     // 3  stride 8
      {K::kCsp, {-1}, 256, 1, 1, 9, true},      // 4
      {K::kConv, {-1}, 512, 3, 2, 1, true},     // 5  stride 16
      {K::kCsp, {-1}, 512, 1, 1, 9, true},      // 6
      {K::kConv, {-1}, 1024, 3, 2, 1, true},    // 7  stride 32
      {K::kSpp, {-1}, 1024, 1, 1, 1, true},     // 8
      {K::kCsp, {-1}, 1024, 1, 1, 3, false},    // 9
      {K::kConv, {-1}, 512, 1, 1, 1, true},     // 10
      {K::kUpsample, {-1}, 0, 1, 1, 1, true},   // 11
      {K::kConcat, {-1, 6}, 0, 1, 1, 1, true},  // 12
      {K::kCsp, {-1}, 512, 1, 1, 3, false},     // 13
      {K::kConv, {-1}, 256, 1, 1, 1, true},     // 14
      {K::kUpsample, {-1}, 0, 1, 1, 1, true},   // 15
      {K::kConcat, {-1, 4}, 0, 1, 1, 1, true},  // 16
      {K::kCsp, {-1}, 256, 1, 1, 3, false},     // 17
  };
  if (!v.has_tiny_head()) {
    t.insert(t.end(), {
                          {K::kConv, {-1}, 256, 3, 2, 1, true},      // 18
                          {K::kConcat, {-1, 14}, 0, 1, 1, 1, true},  // 19
                          {K::kCsp, {-1}, 512, 1, 1, 3, false},      // 20
                          {K::kConv, {-1}, 512, 3, 2, 1, true},      // 21
                          {K::kConcat, {-1, 10}, 0, 1, 1, 1, true},  // 22
                          {K::kCsp, {-1}, 1024, 1, 1, 3, false},     // 23
                          {K::kDetect, {17, 20, 23}, 0, 1, 1, 1, true},
                      });
  } else {
    t.insert(t.end(), {
                          {K::kConv, {-1}, 128, 1, 1, 1, true},      // 18
                          {K::kUpsample, {-1}, 0, 1, 1, 1, true},    // 19
                          {K::kConcat, {-1, 2}, 0, 1, 1, 1, true},   // 20
                          {K::kCsp, {-1}, 128, 1, 1, 3, false},      // 21  stride 4
                          {K::kConv, {-1}, 128, 3, 2, 1, true},      // 22
                          {K::kConcat, {-1, 18}, 0, 1, 1, 1, true},  // 23
                          {K::kCsp, {-1}, 256, 1, 1, 3, false},      // 24  stride 8
                          {K::kConv, {-1}, 256, 3, 2, 1, true},      // 25
                          {K::kConcat, {-1, 14}, 0, 1, 1, 1, true},  // 26
                          {K::kCsp, {-1}, 512, 1, 1, 3, false},      // 27  stride 16
                          {K::kConv, {-1}, 512, 3, 2, 1, true},      // 28
                          {K::kConcat, {-1, 10}, 0, 1, 1, 1, true},  // 29
                          {K::kCsp, {-1}, 1024, 1, 1, 3, false},     // 30  stride 32
                          {K::kDetect, {21, 24, 27, 30}, 0, 1, 1, 1, true},
                      });
  }
  return t;
}

// Channel count after the width multiple, rounded up to a multiple of 8.
inline std::size_t scaled_channels(std::size_t base, double width_multiple) {
  const double c = static_cast<double>(base) * width_multiple;
  const auto rounded = static_cast<std::size_t>(std::ceil(c / 8.0 - 1e-9)) * 8;
  return rounded;
}

inline std::size_t scaled_repeats(std::size_t base, double depth_multiple) {
  if (base <= 1) return base;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(base * depth_multiple)));
}

// Per-head 1x1 prediction convolutions. Output channel layout per head:
// anchor-major blocks of [tx, ty, tw, th, objectness, class scores...].
template <typename T>
class DetectHead : public nn::Module<T> {
 public:
  DetectHead(const std::vector<std::size_t>& in_channels, const ModelVariant& v,
             std::mt19937_64& rng)
      : variant_(v) {
    const std::size_t per = v.outputs_per_anchor();
    for (std::size_t i = 0; i < in_channels.size(); ++i) {
      auto* conv = this->register_module(
          "m." + std::to_string(i),
          std::make_unique<nn::Conv2d<T>>(in_channels[i], v.anchors_per_head * per, 1, 1, 0,
                                          true, rng));
      // Objectness prior of ~8 objects per image; class prior 0.6 / (nc - 0.99).
      const double cells = std::pow(static_cast<double>(v.input_size) / v.head_strides[i], 2.0);
      auto b = conv->bias().data();
      for (std::size_t a = 0; a < v.anchors_per_head; ++a) {
        b[a * per + 4] += static_cast<T>(std::log(8.0 / cells));
        for (std::size_t c = 0; c < v.num_classes; ++c) {
          b[a * per + 5 + c] +=
              static_cast<T>(std::log(0.6 / (static_cast<double>(v.num_classes) - 0.99)));
        }
      }
      convs_.push_back(conv);
    }
  }

  Tensor<T> forward(const Tensor<T>&) override {
    throw ContractError("DetectHead::forward takes one input per head; use forward_heads");
  }

  std::vector<Tensor<T>> forward_heads(const std::vector<Tensor<T>>& taps) {
    std::vector<Tensor<T>> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) out.push_back(convs_[i]->forward(taps[i]));
    return out;
  }

  nn::FlopCount flops(const Shape&) const override { return {}; }
  nn::FlopCount head_flops(std::size_t i, const Shape& in) const { return convs_[i]->flops(in); }
  nn::Conv2d<T>& head(std::size_t i) { return *convs_[i]; }

 private:
  ModelVariant variant_;
  std::vector<nn::Conv2d<T>*> convs_;
};

template <typename T>
class Model {
 public:
  explicit Model(ModelVariant variant, std::uint64_t seed = 0) : variant_(std::move(variant)) {
    if (variant_.head_strides.empty()) variant_.head_strides = variant_.expected_strides();
    variant_.validate();
    if (variant_.anchors.empty()) {
      variant_.anchors = fallback_anchors(variant_.head_strides, variant_.input_size);
    }
    table_ = layer_table(variant_);
    build(seed);
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelVariant& variant() const { return variant_; }
  const AnchorSet& anchors() const { return variant_.anchors; }
  void set_anchors(AnchorSet anchors) {
    ModelVariant v = variant_;
    v.anchors = std::move(anchors);
    v.validate();
    variant_ = std::move(v);
  }
  const std::vector<LayerSpec>& layers() const { return table_; }

  // Raw head outputs, finest stride first: B x A*(5+C) x S x S each.
  std::vector<Tensor<T>> forward(const Tensor<T>& x) {
    if (x.ndim() != 4 || x.dim(1) != 3) {
      throw DimensionError("model", "channels", "expected Bx3xHxW, got " + to_string(x.shape()));
    }
    if (x.dim(2) % variant_.head_strides.back() != 0 ||
        x.dim(3) % variant_.head_strides.back() != 0) {
      throw DimensionError("model", "height",
                           "input extents must be multiples of " +
                               std::to_string(variant_.head_strides.back()));
    }
    std::vector<Tensor<T>> outs(table_.size());
    for (std::size_t i = 0; i < table_.size(); ++i) {
      const auto& spec = table_[i];
      auto input = [&](std::size_t j) -> const Tensor<T>& {
        const int f = spec.from[j];
        return f < 0 ? (i == 0 ? x : outs[i - 1]) : outs[static_cast<std::size_t>(f)];
      };
      switch (spec.kind) {
        case BlockKind::kUpsample: outs[i] = upsample_nearest2x(input(0)); break;
        case BlockKind::kConcat: {
          std::vector<Tensor<T>> parts;
          for (std::size_t j = 0; j < spec.from.size(); ++j) parts.push_back(input(j));
          outs[i] = concat_channels(std::span<const Tensor<T>>(parts));
          break;
        }
        case BlockKind::kDetect: {
          std::vector<Tensor<T>> taps;
          for (std::size_t j = 0; j < spec.from.size(); ++j) taps.push_back(input(j));
          return detect_->forward_heads(taps);
        }
        default: outs[i] = modules_[i]->forward(input(0)); break;
      }
    }
    throw SpecError("layer table has no detect layer");
  }

  void set_training(bool on) {
    for (auto& m : modules_) {
      if (m) m->set_training(on);
    }
  }

  std::vector<nn::NamedTensor<T>> named_parameters() const {
    std::vector<nn::NamedTensor<T>> out;
    for (std::size_t i = 0; i < modules_.size(); ++i) {
      if (modules_[i]) modules_[i]->collect_parameters("model." + std::to_string(i) + ".", out);
    }
    return out;
  }

  std::vector<nn::NamedTensor<T>> named_buffers() const {
    std::vector<nn::NamedTensor<T>> out;
    for (std::size_t i = 0; i < modules_.size(); ++i) {
      if (modules_[i]) modules_[i]->collect_buffers("model." + std::to_string(i) + ".", out);
    }
    return out;
  }

  // Parameters followed by buffers: everything a checkpoint stores.
  std::vector<nn::NamedTensor<T>> state() const {
    auto s = named_parameters();
    auto b = named_buffers();
    s.insert(s.end(), b.begin(), b.end());
    return s;
  }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (auto& n : named_parameters()) out.push_back(n.tensor);
    return out;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.zero_grad();
  }

  // Copies every parameter and buffer by name from a model of the same
  // structure, possibly of a different scalar type.
  template <typename U>
  void copy_state_from(const Model<U>& other) {
    auto src = other.state();
    auto dst = state();
    if (src.size() != dst.size()) throw ContractError("copy_state_from: structure mismatch");
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (src[i].name != dst[i].name || src[i].tensor.shape() != dst[i].tensor.shape()) {
        throw ContractError("copy_state_from: mismatch at " + dst[i].name);
      }
      auto d = dst[i].tensor.data();
      auto s = src[i].tensor.data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<T>(s[k]);
    }
    variant_.anchors = other.variant().anchors;
  }

  std::size_t count_params() const {
    std::size_t n = 0;
    for (auto& p : named_parameters()) n += p.tensor.numel();
    return n;
  }

  std::size_t count_modules() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < table_.size(); ++i) {
      switch (table_[i].kind) {
        case BlockKind::kUpsample:
        case BlockKind::kConcat: n += 1; break;
        default: n += modules_[i]->module_count(); break;
      }
    }
    return n;
  }

  std::uint64_t count_flops(std::size_t input_size) const {
    std::vector<Shape> shapes(table_.size());
    std::uint64_t total = 0;
    const Shape in{1, 3, input_size, input_size};
    for (std::size_t i = 0; i < table_.size(); ++i) {
      const auto& spec = table_[i];
      auto shape_of = [&](std::size_t j) -> const Shape& {
        const int f = spec.from[j];
        return f < 0 ? (i == 0 ? in : shapes[i - 1]) : shapes[static_cast<std::size_t>(f)];
      };
      switch (spec.kind) {
        case BlockKind::kUpsample: {
          Shape s = shape_of(0);
          s[2] *= 2;
          s[3] *= 2;
          shapes[i] = s;
          break;
        }
        case BlockKind::kConcat: {
          Shape s = shape_of(0);
          s[1] = 0;
          for (std::size_t j = 0; j < spec.from.size(); ++j) s[1] += shape_of(j)[1];
          shapes[i] = s;
          break;
        }
        case BlockKind::kDetect:
          for (std::size_t j = 0; j < spec.from.size(); ++j) {
            total += detect_->head_flops(j, shape_of(j)).flops;
          }
          break;
        default: {
          auto f = modules_[i]->flops(shape_of(0));
          total += f.flops;
          shapes[i] = f.out;
          break;
        }
      }
    }
    return total;
  }

  std::vector<std::size_t> grid_sizes(std::size_t input_size) const {
    std::vector<std::size_t> g;
    for (auto s : variant_.head_strides) g.push_back(input_size / s);
    return g;
  }

  DetectHead<T>& detect() { return *detect_; }
  nn::Module<T>* layer_module(std::size_t i) { return modules_.at(i).get(); }

 private:
  void build(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nn::ConvPolicy policy;
    policy.ghost = variant_.uses_ghost();
    const double gw = variant_.width_multiple, gd = variant_.depth_multiple;
    std::vector<std::size_t> ch(table_.size());
    modules_.resize(table_.size());
    for (std::size_t i = 0; i < table_.size(); ++i) {
      const auto& s = table_[i];
      for (int f : s.from) {
        if (f >= static_cast<int>(i)) throw SpecError("layer graph is not a DAG at " + std::to_string(i));
      }
      auto in_ch = [&](std::size_t j) {
        const int f = s.from[j];
        return f < 0 ? (i == 0 ? std::size_t{3} : ch[i - 1]) : ch[static_cast<std::size_t>(f)];
      };
      const std::size_t c2 = s.channels ? scaled_channels(s.channels, gw) : 0;
      if (s.channels && c2 == 0) throw SpecError("width multiple yields zero channels");
      switch (s.kind) {
        case BlockKind::kFocus:
          modules_[i] = std::make_unique<nn::Focus<T>>(in_ch(0), c2, s.kernel, policy, rng);
          ch[i] = c2;
          break;
        case BlockKind::kConv:
          modules_[i] = nn::make_conv<T>(in_ch(0), c2, s.kernel, s.stride, policy, rng);
          ch[i] = c2;
          break;
        case BlockKind::kCsp: {
          nn::CspSpec cs;
          cs.in_channels = in_ch(0);
          cs.out_channels = c2;
          cs.repeats = scaled_repeats(s.repeats, gd);
          cs.shortcut = s.shortcut;
          if (variant_.uses_csp()) {
            modules_[i] = std::make_unique<nn::BottleneckCSP<T>>(cs, policy, rng);
          } else {
            modules_[i] = std::make_unique<nn::C3<T>>(cs, policy, rng);
          }
          ch[i] = c2;
          break;
        }
        case BlockKind::kSpp:
          modules_[i] = std::make_unique<nn::SPP<T>>(in_ch(0), c2, policy, rng);
          ch[i] = c2;
          break;
        case BlockKind::kUpsample: ch[i] = in_ch(0); break;
        case BlockKind::kConcat:
          ch[i] = 0;
          for (std::size_t j = 0; j < s.from.size(); ++j) ch[i] += in_ch(j);
          break;
        case BlockKind::kDetect: {
          if (s.from.size() != variant_.num_heads()) {
            throw SpecError("detect taps do not match head count");
          }
          std::vector<std::size_t> taps;
          for (std::size_t j = 0; j < s.from.size(); ++j) taps.push_back(in_ch(j));
          auto head = std::make_unique<DetectHead<T>>(taps, variant_, rng);
          detect_ = head.get();
          modules_[i] = std::move(head);
          break;
        }
      }
    }
    if (detect_ == nullptr) throw SpecError("layer table has no detect layer");
  }

  ModelVariant variant_;
  std::vector<LayerSpec> table_;
  std::vector<std::unique_ptr<nn::Module<T>>> modules_;
  DetectHead<T>* detect_ = nullptr;
};

}  // namespace gbh::model
