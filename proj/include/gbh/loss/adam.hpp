// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "gbh/core/error.hpp"
#include "gbh/core/tensor.hpp"

namespace gbh {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moments per parameter plus the shared step count.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

// One bias-corrected Adam update of `params` from their accumulated grads.
// Parameters without a gradient buffer are treated as having zero gradient.
template <typename T>
void adam_step(const std::vector<Tensor<T>>& params, AdamState& state, const AdamOptions& opt = {}) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError("adam_step: state holds " + std::to_string(state.m.size()) +
                        " tensors, got " + std::to_string(params.size()));
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.numel()) throw ContractError("adam_step: parameter shape changed");
    const bool has_grad = p.has_grad();
    auto data = p.data();
    for (std::size_t k = 0; k < m.size(); ++k) {
      const double g = has_grad ? static_cast<double>(p.impl()->grad[k]) : 0.0;
      m[k] = opt.beta1 * m[k] + (1 - opt.beta1) * g;
      v[k] = opt.beta2 * v[k] + (1 - opt.beta2) * g * g;
      const double mh = m[k] / bc1, vh = v[k] / bc2;
      data[k] = static_cast<T>(static_cast<double>(data[k]) - opt.lr * mh / (std::sqrt(vh) + opt.eps));
    }
  }
}

}  // namespace gbh
