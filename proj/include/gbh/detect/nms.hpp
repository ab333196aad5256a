// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "gbh/detect/box.hpp"

namespace gbh {

// Confidence descending, then smaller center x, then smaller center y.
inline bool detection_rank_less(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.box.cx != b.box.cx) return a.box.cx < b.box.cx;
  return a.box.cy < b.box.cy;
}

// Greedy class-aware suppression: a detection survives iff its IoU with
// every already-kept detection of the same class is below the threshold.
inline std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  std::stable_sort(dets.begin(), dets.end(), detection_rank_less);
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    bool keep = true;
    for (const auto& k : kept) {
      if (k.class_id == d.class_id && iou(k.box, d.box) >= iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(d);
  }
  return kept;
}

// One text record per detection:
//   <image id> <class name> <confidence %.6f> <cx> <cy> <w> <h>
inline std::string format_detection(const std::string& image_id, const Detection& d) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s %s %.6f %.3f %.3f %.3f %.3f", image_id.c_str(),
                class_name(d.class_id).c_str(), d.confidence, d.box.cx, d.box.cy, d.box.w, d.box.h);
  return buf;
}

struct DetectionRecord {
  std::string image_id;
  Detection det;
};

// Returns false on malformed lines or unknown class names.
inline bool parse_detection(const std::string& line, DetectionRecord& rec) {
  std::istringstream is(line);
  std::string cls;
  if (!(is >> rec.image_id >> cls >> rec.det.confidence >> rec.det.box.cx >> rec.det.box.cy >>
        rec.det.box.w >> rec.det.box.h)) {
    return false;
  }
  rec.det.class_id = class_index(cls);
  return rec.det.class_id >= 0;
}

}  // namespace gbh
