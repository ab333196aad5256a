// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "gbh/core/error.hpp"
#include "gbh/model/variant.hpp"

namespace gbh::train {

struct RunConfig {
  std::string variant = "gbh";
  std::string profile = "standard";  // standard | tiny
  std::size_t input_size = 0;        // 0: profile default (960 standard, 192 tiny)
  std::size_t epochs = 500;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::string data;        // dataset root
  std::string out;         // output directory
  std::string checkpoint;  // checkpoint to evaluate, detect with, or resume from
  std::size_t checkpoint_every = 50;
  std::size_t pr_every = 10;  // train-set P/R every N epochs; 0 disables
  double mosaic = 1.0;        // mosaic probability before the final 10% of epochs
  double conf_threshold = 0.25;
  double iou_threshold = 0.45;  // NMS
  double match_iou = 0.5;       // evaluation matching

  void validate() const {
    bool known = false;
    for (auto n : model::kVariantNames) known = known || n == variant;
    if (!known) throw ConfigError("variant must be one of yolov5s, yolov5-1, yolov5-2, gbh; got '" + variant + "'");
    if (profile != "standard" && profile != "tiny") {
      throw ConfigError("profile must be standard or tiny; got '" + profile + "'");
    }
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(lr > 0)) throw ConfigError("lr must be positive");
    if (!(mosaic >= 0 && mosaic <= 1)) throw ConfigError("mosaic must lie in [0, 1]");
    for (double t : {conf_threshold, iou_threshold, match_iou}) {
      if (!(t >= 0 && t <= 1)) throw ConfigError("thresholds must lie in [0, 1]");
    }
    const std::size_t size = resolved_input_size();
    if (size % 32 != 0) throw ConfigError("input_size " + std::to_string(size) + " must be a multiple of 32");
  }

  std::size_t resolved_input_size() const {
    if (input_size) return input_size;
    return profile == "tiny" ? 192 : 960;
  }

  model::ModelVariant model_variant() const {
    validate();
    try {
      return profile == "tiny" ? model::ModelVariant::tiny(variant, resolved_input_size())
                               : model::ModelVariant::standard(variant, resolved_input_size());
    } catch (const SpecError& e) {
      throw ConfigError(e.what());
    }
  }
};

}  // namespace gbh::train
