// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

/// @file detection_loss.hpp
/// Box, objectness and class terms over raw head outputs.
///
///   box = mean over assigned (GT, head, anchor, cell) of (1 - CIoU)
///   obj = sum_h balance[h] * mean over head h cells of BCE(logit, t)
///         where t = clamp(CIoU, 0, 1) on assigned cells (detached), 0 elsewhere
///   cls = mean over assigned pairs and classes of one-vs-all BCE
///   total = w_box * box + w_obj * obj + w_cls * cls
///
/// The loss is one fused tape op: gradients w.r.t. every head element are
/// computed during the forward pass and scaled by the upstream gradient.

#pragma once

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <vector>

#include "gbh/core/ops.hpp"
#include "gbh/loss/assign.hpp"
#include "gbh/loss/ciou.hpp"

namespace gbh {

struct LossWeights {
  double box = 0.05;
  double obj = 1.0;
  double cls = 0.5;
  std::vector<double> balance;  // per head objectness weight; empty -> default_balance
};

// Finer heads see more cells and are weighted up.
inline std::vector<double> default_balance(std::size_t heads) {
  if (heads == 3) return {4.0, 1.0, 0.4};
  if (heads == 4) return {4.0, 1.0, 0.25, 0.06};
  return std::vector<double>(heads, 1.0);
}

template <typename T>
struct LossBreakdown {
  double box = 0;
  double obj = 0;
  double cls = 0;
  double total = 0;
  std::size_t assigned = 0;  // (GT, head, anchor, cell) pairs across the batch
  Tensor<T> loss;            // differentiable scalar equal to `total`
};

// Objectness targets per head, flattened B x A x S x S.
using ObjectnessTargets = std::vector<std::vector<double>>;

struct LossOptions {
  LossWeights weights;
  // When set, objectness targets are read from here instead of being derived
  // from the current predictions (keeps the loss smooth for finite differences).
  const ObjectnessTargets* frozen_obj_targets = nullptr;
  ObjectnessTargets* obj_targets_out = nullptr;
};

namespace detail {

template <typename C>
C bce_with_logits(C x, C t) {
  return std::max(x, C(0)) - x * t + std::log1p(std::exp(-std::abs(x)));
}

template <typename S>
S dual_sigmoid(const S& x) {
  using std::exp;
  return S(1) / (S(1) + exp(-x));
}

}  // namespace detail

template <typename T>
LossBreakdown<T> detection_loss(const std::vector<Tensor<T>>& heads,
                                const std::vector<std::vector<GroundTruth>>& gts,
                                const std::vector<TargetAssignment>& assignments,
                                const model::AnchorSet& anchors,
                                const std::vector<std::size_t>& strides,
                                const LossOptions& options = {}) {
  const std::size_t nh = heads.size();
  if (nh == 0 || anchors.size() != nh || strides.size() != nh) {
    throw ContractError("detection_loss: heads, anchors and strides disagree");
  }
  const std::size_t nb = heads[0].dim(0);
  if (gts.size() != nb || assignments.size() != nb) {
    throw ContractError("detection_loss: batch of " + std::to_string(nb) + " but " +
                        std::to_string(gts.size()) + " GT lists");
  }
  const std::size_t na = anchors[0].size();
  const std::size_t per = heads[0].dim(1) / na;
  const std::size_t nc = per - 5;
  auto balance = options.weights.balance.empty() ? default_balance(nh) : options.weights.balance;
  if (balance.size() != nh) throw ContractError("detection_loss: balance size mismatch");

  std::size_t pairs = 0;
  for (const auto& a : assignments) pairs += a.entries.size();

  // Internal arithmetic runs in at least double precision.
  using C = std::conditional_t<(sizeof(T) > sizeof(double)), T, double>;
  std::vector<std::vector<C>> grads(nh);
  ObjectnessTargets tobj(nh);
  for (std::size_t h = 0; h < nh; ++h) {
    const auto& hd = heads[h];
    if (hd.ndim() != 4 || hd.dim(0) != nb || hd.dim(1) != na * per) {
      throw DimensionError("detection_loss", "channels", to_string(hd.shape()));
    }
    grads[h].assign(hd.numel(), C(0));
    tobj[h].assign(nb * na * hd.dim(2) * hd.dim(3), 0.0);
  }

  using D = Dual<C, 4>;
  C box_sum = 0, cls_sum = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    for (const auto& e : assignments[b].entries) {
      if (e.head >= nh || e.gt >= gts[b].size()) {
        throw ContractError("detection_loss: assignment inconsistent with heads or GTs");
      }
      const auto& hd = heads[e.head];
      const std::size_t gh = hd.dim(2), gw = hd.dim(3);
      if (e.cell_x >= gw || e.cell_y >= gh || e.anchor >= na) {
        throw ContractError("detection_loss: assignment outside head grid");
      }
      auto idx = [&](std::size_t k) {
        return ((b * hd.dim(1) + e.anchor * per + k) * gh + e.cell_y) * gw + e.cell_x;
      };
      const auto hv = hd.data();
      const C s = static_cast<C>(strides[e.head]);
      const auto& anc = anchors[e.head][e.anchor];
      D t[4];
      for (int k = 0; k < 4; ++k) t[k] = D::variable(static_cast<C>(hv[idx(k)]), k);
      const D two(2.0);
      const D px = (two * detail::dual_sigmoid(t[0]) - D(0.5) + D(static_cast<C>(e.cell_x))) * D(s);
      const D py = (two * detail::dual_sigmoid(t[1]) - D(0.5) + D(static_cast<C>(e.cell_y))) * D(s);
      const D sw = two * detail::dual_sigmoid(t[2]);
      const D sh = two * detail::dual_sigmoid(t[3]);
      const D pw = sw * sw * D(static_cast<C>(anc.w));
      const D ph = sh * sh * D(static_cast<C>(anc.h));
      const Box& g = gts[b][e.gt].box;
      const D c = ciou(BoxT<D>{px, py, pw, ph}, BoxT<D>{D(C(g.cx)), D(C(g.cy)), D(C(g.w)), D(C(g.h))});
      box_sum += C(1) - c.v;
      const C wbox = C(options.weights.box) / static_cast<C>(pairs);
      for (int k = 0; k < 4; ++k) grads[e.head][idx(k)] += -c.d[k] * wbox;

      const std::size_t cell = ((b * na + e.anchor) * gh + e.cell_y) * gw + e.cell_x;
      auto& to = tobj[e.head][cell];
      to = std::max(to, static_cast<double>(std::clamp(c.v, C(0), C(1))));

      const C wcls = C(options.weights.cls) / static_cast<C>(pairs * nc);
      const int target_class = gts[b][e.gt].class_id;
      for (std::size_t k = 0; k < nc; ++k) {
        const C x = static_cast<C>(hv[idx(5 + k)]);
        const C tc = static_cast<int>(k) == target_class ? C(1) : C(0);
        cls_sum += detail::bce_with_logits(x, tc);
        grads[e.head][idx(5 + k)] += (gbh::detail::sigmoid_scalar(x) - tc) * wcls;
      }
    }
  }

  if (options.frozen_obj_targets != nullptr) {
    if (options.frozen_obj_targets->size() != nh) {
      throw ContractError("detection_loss: frozen objectness targets have wrong head count");
    }
    tobj = *options.frozen_obj_targets;
  }
  if (options.obj_targets_out != nullptr) *options.obj_targets_out = tobj;

  C obj_sum = 0;
  for (std::size_t h = 0; h < nh; ++h) {
    const auto& hd = heads[h];
    const std::size_t gh = hd.dim(2), gw = hd.dim(3);
    const std::size_t cells = nb * na * gh * gw;
    if (tobj[h].size() != cells) throw ContractError("detection_loss: objectness target size");
    const auto hv = hd.data();
    C head_sum = 0;
    const C w = C(options.weights.obj * balance[h]) / static_cast<C>(cells);
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t a = 0; a < na; ++a) {
        for (std::size_t p = 0; p < gh * gw; ++p) {
          const std::size_t i = (b * hd.dim(1) + a * per + 4) * gh * gw + p;
          const C x = static_cast<C>(hv[i]);
          const C t = static_cast<C>(tobj[h][(b * na + a) * gh * gw + p]);
          head_sum += detail::bce_with_logits(x, t);
          grads[h][i] += (gbh::detail::sigmoid_scalar(x) - t) * w;
        }
      }
    }
    obj_sum += C(balance[h]) * head_sum / static_cast<C>(cells);
  }

  LossBreakdown<T> out;
  out.assigned = pairs;
  const C box = pairs ? box_sum / static_cast<C>(pairs) : C(0);
  const C cls = pairs ? cls_sum / static_cast<C>(pairs * nc) : C(0);
  const C total = C(options.weights.box) * box + C(options.weights.obj) * obj_sum +
                  C(options.weights.cls) * cls;
  out.box = static_cast<double>(box);
  out.cls = static_cast<double>(cls);
  out.obj = static_cast<double>(obj_sum);
  out.total = static_cast<double>(total);
  out.loss = Tensor<T>::scalar(static_cast<T>(total));

  bool any_grad = false;
  for (const auto& hd : heads) any_grad = any_grad || hd.requires_grad();
  if (any_grad && active_tape<T>() != nullptr) {
    out.loss.set_requires_grad();
    std::vector<std::shared_ptr<TensorImpl<T>>> impls;
    for (const auto& hd : heads) impls.push_back(hd.impl());
    active_tape<T>()->record(
        "detection_loss", [impls, grads = std::move(grads), li = out.loss.impl()] {
          if (li->grad.empty()) return;
          const C up = static_cast<C>(li->grad[0]);
          for (std::size_t h = 0; h < impls.size(); ++h) {
            if (!impls[h]->requires_grad) continue;
            impls[h]->ensure_grad();
            auto& g = impls[h]->grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<T>(grads[h][i] * up);
          }
        });
  }
  return out;
}

// Assigns targets per image, then evaluates the loss.
template <typename T>
LossBreakdown<T> detection_loss(const std::vector<Tensor<T>>& heads,
                                const std::vector<std::vector<GroundTruth>>& gts,
                                const model::AnchorSet& anchors,
                                const std::vector<std::size_t>& strides, std::size_t input_size,
                                const LossOptions& options = {},
                                double ratio_gate = kDefaultRatioGate) {
  std::vector<TargetAssignment> assignments;
  for (const auto& g : gts) assignments.push_back(assign_targets(g, anchors, strides, input_size, ratio_gate));
  return detection_loss(heads, gts, assignments, anchors, strides, options);
}

}  // namespace gbh
