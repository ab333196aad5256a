// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

// Detection matching, precision/recall and all-point average precision.
//
//   R = TP / (TP + FN)      P = TP / (TP + FP)
//   AP = sum_k P_env(k) * (R(k) - R(k-1)),  P_env(k) = max_{j >= k} P(j)
//   mAP = mean of AP over classes that occur in the ground truth or the
//         detections

#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gbh/core/error.hpp"
#include "gbh/detect/box.hpp"
#include "gbh/detect/nms.hpp"

namespace gbh::eval {

inline constexpr double kMatchIou = 0.5;
inline constexpr double kApConfThreshold = 0.001;
inline constexpr double kReportConfThreshold = 0.25;

struct MatchResult {
  std::vector<bool> tp;          // per detection, input order
  std::vector<bool> gt_matched;  // per ground-truth box
};

// Detections are visited in rank order (confidence descending). Each
// takes the unmatched same-class GT of highest IoU and is a TP when that IoU
// reaches the threshold; otherwise it is an FP.
inline MatchResult match_detections(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                    double iou_threshold = kMatchIou) {
  MatchResult r;
  r.tp.assign(dets.size(), false);
  r.gt_matched.assign(gts.size(), false);
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detection_rank_less(dets[a], dets[b]); });
  for (std::size_t d : order) {
    double best = -1;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (r.gt_matched[g] || gts[g].class_id != dets[d].class_id) continue;
      const double v = iou(dets[d].box, gts[g].box);
      if (v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best_g < gts.size() && best >= iou_threshold) {
      r.tp[d] = true;
      r.gt_matched[best_g] = true;
    }
  }
  return r;
}

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

struct PrecisionRecall {
  double precision = 0;
  double recall = 0;
  bool degenerate = false;  // some ratio was 0/0 and is reported as 0
};

inline PrecisionRecall precision_recall(const ConfusionCounts& c) {
  PrecisionRecall pr;
  const auto tp = static_cast<double>(c.tp);
  if (c.tp + c.fp > 0) {
    pr.precision = tp / static_cast<double>(c.tp + c.fp);
  } else {
    pr.degenerate = true;
  }
  if (c.tp + c.fn > 0) {
    pr.recall = tp / static_cast<double>(c.tp + c.fn);
  } else {
    pr.degenerate = true;
  }
  return pr;
}

struct PrPoint {
  double confidence = 0;
  double precision = 0;
  double recall = 0;
  bool tp = false;
};

// Precision/recall after each detection of a ranking.
inline std::vector<PrPoint> pr_curve(const std::vector<bool>& flags, std::size_t num_gt,
                                     const std::vector<double>& confidences = {}) {
  std::vector<PrPoint> out;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < flags.size(); ++k) {
    tp += flags[k] ? 1 : 0;
    PrPoint p;
    p.confidence = k < confidences.size() ? confidences[k] : 0.0;
    p.precision = static_cast<double>(tp) / static_cast<double>(k + 1);
    p.recall = num_gt ? static_cast<double>(tp) / static_cast<double>(num_gt) : 0.0;
    p.tp = flags[k];
    out.push_back(p);
  }
  return out;
}

// All-point AP from curve points in rank order.
inline double ap_from_curve(const std::vector<PrPoint>& curve) {
  double ap = 0;
  double env = 0;
  // Walk backwards carrying the running precision maximum.
  for (std::size_t k = curve.size(); k-- > 0;) {
    env = std::max(env, curve[k].precision);
    const double prev = k ? curve[k - 1].recall : 0.0;
    ap += env * (curve[k].recall - prev);
  }
  return ap;
}

// TP flags in descending-confidence order. Undefined (nullopt) when the
// class has neither ground truth nor detections; 0 when it has detections
// but no ground truth.
inline std::optional<double> average_precision(const std::vector<bool>& flags, std::size_t num_gt) {
  if (num_gt == 0) return flags.empty() ? std::nullopt : std::optional<double>(0.0);
  return ap_from_curve(pr_curve(flags, num_gt));
}

inline std::optional<double> mean_ap(const std::vector<std::optional<double>>& aps) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& a : aps) {
    if (!a) continue;
    sum += *a;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

struct ImageResult {
  std::string id;
  std::vector<Detection> detections;
  std::vector<GroundTruth> ground_truth;
};

struct EvalOptions {
  double iou_threshold = kMatchIou;
  double ap_conf_threshold = kApConfThreshold;  // detections below are ignored for AP
  double conf_threshold = kReportConfThreshold;  // operating point for TP/FP/FN, P and R
  std::size_t num_classes = kDefectClasses.size();
};

struct ClassReport {
  int class_id = 0;
  std::optional<double> ap;
  ConfusionCounts counts;
  PrecisionRecall pr;
  std::size_t num_gt = 0;
  std::vector<PrPoint> curve;  // over every detection above ap_conf_threshold
};

struct EvalReport {
  std::vector<ClassReport> classes;
  std::optional<double> map;
  ConfusionCounts counts;  // summed over classes
  PrecisionRecall pr;      // from the summed counts
  std::size_t images = 0;
  std::size_t gt_boxes = 0;
  double iou_threshold = kMatchIou;
  double conf_threshold = kReportConfThreshold;
};

namespace detail {

inline std::vector<Detection> above(const std::vector<Detection>& dets, double threshold) {
  std::vector<Detection> out;
  for (const auto& d : dets) {
    if (d.confidence >= threshold) out.push_back(d);
  }
  return out;
}

}  // namespace detail

inline EvalReport evaluate(const std::vector<ImageResult>& images, const EvalOptions& opt = {}) {
  EvalReport rep;
  rep.images = images.size();
  rep.iou_threshold = opt.iou_threshold;
  rep.conf_threshold = opt.conf_threshold;
  rep.classes.resize(opt.num_classes);
  for (std::size_t c = 0; c < opt.num_classes; ++c) rep.classes[c].class_id = static_cast<int>(c);

  struct Ranked {
    double confidence;
    std::size_t image;
    std::size_t index;
    bool tp;
  };
  // Images are visited in id order so that confidence ties across images,
  // and therefore the report, do not depend on input order.
  std::vector<std::size_t> by_id(images.size());
  std::iota(by_id.begin(), by_id.end(), std::size_t{0});
  std::stable_sort(by_id.begin(), by_id.end(),
                   [&](std::size_t a, std::size_t b) { return images[a].id < images[b].id; });
  std::vector<std::vector<Ranked>> ranked(opt.num_classes);
  for (std::size_t i : by_id) {
    const auto& img = images[i];
    for (const auto& g : img.ground_truth) {
      if (g.class_id < 0 || static_cast<std::size_t>(g.class_id) >= opt.num_classes) {
        throw ContractError("evaluate: ground-truth class " + std::to_string(g.class_id) + " out of range");
      }
      ++rep.classes[static_cast<std::size_t>(g.class_id)].num_gt;
      ++rep.gt_boxes;
    }
    const auto for_ap = detail::above(img.detections, opt.ap_conf_threshold);
    const auto m = match_detections(for_ap, img.ground_truth, opt.iou_threshold);
    for (std::size_t d = 0; d < for_ap.size(); ++d) {
      const int c = for_ap[d].class_id;
      if (c < 0 || static_cast<std::size_t>(c) >= opt.num_classes) {
        throw ContractError("evaluate: detection class " + std::to_string(c) + " out of range");
      }
      ranked[static_cast<std::size_t>(c)].push_back({for_ap[d].confidence, i, d, m.tp[d]});
    }
    const auto at_op = detail::above(img.detections, opt.conf_threshold);
    const auto mo = match_detections(at_op, img.ground_truth, opt.iou_threshold);
    for (std::size_t d = 0; d < at_op.size(); ++d) {
      auto& cnt = rep.classes[static_cast<std::size_t>(at_op[d].class_id)].counts;
      (mo.tp[d] ? cnt.tp : cnt.fp) += 1;
    }
  }

  std::vector<std::optional<double>> aps;
  for (std::size_t c = 0; c < opt.num_classes; ++c) {
    auto& cr = rep.classes[c];
    auto& r = ranked[c];
    std::stable_sort(r.begin(), r.end(), [](const Ranked& a, const Ranked& b) { return a.confidence > b.confidence; });
    std::vector<bool> flags;
    std::vector<double> confs;
    for (const auto& x : r) {
      flags.push_back(x.tp);
      confs.push_back(x.confidence);
    }
    cr.curve = pr_curve(flags, cr.num_gt, confs);
    cr.ap = average_precision(flags, cr.num_gt);
    cr.counts.fn = cr.num_gt - cr.counts.tp;
    cr.pr = precision_recall(cr.counts);
    rep.counts += cr.counts;
    aps.push_back(cr.ap);
  }
  rep.map = mean_ap(aps);
  rep.pr = precision_recall(rep.counts);
  return rep;
}

}  // namespace gbh::eval
