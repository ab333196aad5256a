// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

// Umbrella header for the whole library.

#pragma once

#include "gbh/core/error.hpp"
#include "gbh/core/gradcheck.hpp"
#include "gbh/core/ops.hpp"
#include "gbh/core/tensor.hpp"
#include "gbh/data/anchors.hpp"
#include "gbh/data/dataset.hpp"
#include "gbh/data/draw.hpp"
#include "gbh/data/image.hpp"
#include "gbh/data/image_io.hpp"
#include "gbh/data/letterbox.hpp"
#include "gbh/data/mosaic.hpp"
#include "gbh/data/preprocess.hpp"
#include "gbh/data/synth.hpp"
#include "gbh/data/voc.hpp"
#include "gbh/detect/box.hpp"
#include "gbh/detect/decode.hpp"
#include "gbh/detect/detector.hpp"
#include "gbh/detect/nms.hpp"
#include "gbh/eval/metrics.hpp"
#include "gbh/eval/report.hpp"
#include "gbh/loss/adam.hpp"
#include "gbh/loss/assign.hpp"
#include "gbh/loss/ciou.hpp"
#include "gbh/loss/detection_loss.hpp"
#include "gbh/model/checkpoint.hpp"
#include "gbh/model/model.hpp"
#include "gbh/model/variant.hpp"
#include "gbh/nn/blocks.hpp"
#include "gbh/nn/module.hpp"
#include "gbh/train/config.hpp"
#include "gbh/train/trainer.hpp"
