// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gbh/core/tensor.hpp"

namespace gbh::nn {

// Conv multiply-accumulates counted as 2 FLOPs each; BN, activations,
// pooling and copies are not counted.
struct FlopCount {
  std::uint64_t flops = 0;
  Shape out;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  Module(Module&&) = delete;
  Module& operator=(Module&&) = delete;

  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual FlopCount flops(const Shape& in) const = 0;

  // Leaf nodes contributed by this module itself (not its children).
  virtual std::size_t own_module_count() const { return 0; }

  std::size_t module_count() const {
    std::size_t n = own_module_count();
    for (const auto& [name, child] : children_) n += child->module_count();
    return n;
  }

  void set_training(bool on) {
    training_ = on;
    for (auto& [name, child] : children_) child->set_training(on);
  }
  bool training() const { return training_; }

  void collect_parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
    for (const auto& [name, t] : params_) out.push_back({prefix + name, t});
    for (const auto& [name, child] : children_) child->collect_parameters(prefix + name + ".", out);
  }

  void collect_buffers(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
    for (const auto& [name, t] : buffers_) out.push_back({prefix + name, t});
    for (const auto& [name, child] : children_) child->collect_buffers(prefix + name + ".", out);
  }

  std::vector<Tensor<T>> parameters() const {
    std::vector<NamedTensor<T>> named;
    collect_parameters("", named);
    std::vector<Tensor<T>> out;
    for (auto& n : named) out.push_back(n.tensor);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : parameters()) n += t.numel();
    return n;
  }

 protected:
  Tensor<T> register_parameter(std::string name, Tensor<T> t) {
    t.set_requires_grad(true);
    params_.emplace_back(std::move(name), t);
    return t;
  }

  Tensor<T> register_buffer(std::string name, Tensor<T> t) {
    buffers_.emplace_back(std::move(name), t);
    return t;
  }

  template <typename M>
  M* register_module(std::string name, std::unique_ptr<M> m) {
    M* raw = m.get();
    children_.emplace_back(std::move(name), std::move(m));
    return raw;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> params_;
  std::vector<std::pair<std::string, Tensor<T>>> buffers_;
  std::vector<std::pair<std::string, std::unique_ptr<Module>>> children_;
  bool training_ = false;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for conv layers.
template <typename T>
Tensor<T> uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace gbh::nn
