// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

// End-to-end inference: letterbox, forward, decode, NMS, and mapping back to
// the original image frame.

#pragma once

#include <algorithm>
#include <vector>

#include "gbh/data/image.hpp"
#include "gbh/data/letterbox.hpp"
#include "gbh/detect/decode.hpp"
#include "gbh/detect/nms.hpp"
#include "gbh/eval/metrics.hpp"
#include "gbh/model/model.hpp"

namespace gbh {

struct DetectOptions {
  double conf_threshold = kDefaultConfThreshold;
  double iou_threshold = kDefaultIouThreshold;
  std::size_t max_candidates = 3000;  // best-ranked boxes entering NMS
  std::size_t max_detections = 300;   // kept after NMS
  std::size_t batch_size = 8;
};

// Keeps boxes inside the image; drops those with nothing left.
inline std::vector<Detection> clip_detections(std::vector<Detection> dets, std::size_t width, std::size_t height) {
  std::vector<Detection> out;
  for (auto& d : dets) {
    if (data::clip_box(d.box, 0, 0, static_cast<double>(width), static_cast<double>(height))) out.push_back(d);
  }
  return out;
}

inline std::vector<Detection> postprocess(std::vector<Detection> dets, const DetectOptions& opt) {
  std::stable_sort(dets.begin(), dets.end(), detection_rank_less);
  if (dets.size() > opt.max_candidates) dets.resize(opt.max_candidates);
  auto kept = nms(std::move(dets), opt.iou_threshold);
  if (kept.size() > opt.max_detections) kept.resize(opt.max_detections);
  return kept;
}

// Runs the model in inference mode; detections are in each image's own
// pixel frame. The model is left in inference mode.
template <typename T>
std::vector<std::vector<Detection>> detect_images(model::Model<T>& m, const std::vector<const data::Image*>& images,
                                                  const DetectOptions& opt = {}) {
  const std::size_t size = m.variant().input_size;
  const std::size_t bs = std::max<std::size_t>(1, opt.batch_size);
  m.set_training(false);
  NoGradScope<T> no_grad;
  std::vector<std::vector<Detection>> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += bs) {
    const std::size_t n = std::min(bs, images.size() - start);
    Tensor<T> x = Tensor<T>::zeros({n, 3, size, size});
    std::vector<data::LetterboxTransform> tf(n);
    for (std::size_t b = 0; b < n; ++b) {
      auto lb = data::letterbox(*images[start + b], size);
      tf[b] = lb.transform;
      data::write_to_batch(lb.image, x, b);
    }
    const auto heads = m.forward(x);
    for (std::size_t b = 0; b < n; ++b) {
      auto dets = postprocess(decode(heads, b, m.anchors(), m.variant().head_strides, opt.conf_threshold), opt);
      for (auto& d : dets) d.box = tf[b].to_original(d.box);
      const auto& img = *images[start + b];
      out.push_back(clip_detections(std::move(dets), img.width, img.height));
    }
  }
  return out;
}

// Detections at the AP threshold paired with ground truth, ready for
// eval::evaluate.
template <typename T>
std::vector<eval::ImageResult> collect_results(model::Model<T>& m, const std::vector<data::AnnotatedImage>& items,
                                               DetectOptions opt = {}) {
  opt.conf_threshold = std::min(opt.conf_threshold, eval::kApConfThreshold);
  std::vector<const data::Image*> imgs;
  for (const auto& a : items) imgs.push_back(&a.image);
  const auto dets = detect_images(m, imgs, opt);
  std::vector<eval::ImageResult> out;
  for (std::size_t i = 0; i < items.size(); ++i) out.push_back({items[i].id, dets[i], items[i].boxes});
  return out;
}

}  // namespace gbh
