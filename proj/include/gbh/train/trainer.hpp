// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

// Deterministic single-process training loop: Adam on the detection loss,
// mosaic augmentation outside the final epochs, per-epoch loss logging,
// periodic checkpoints with optimizer state, and resume.

#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gbh/data/anchors.hpp"
#include "gbh/data/image.hpp"
#include "gbh/data/letterbox.hpp"
#include "gbh/data/mosaic.hpp"
#include "gbh/data/synth.hpp"
#include "gbh/detect/detector.hpp"
#include "gbh/eval/metrics.hpp"
#include "gbh/loss/adam.hpp"
#include "gbh/loss/detection_loss.hpp"
#include "gbh/model/checkpoint.hpp"
#include "gbh/model/model.hpp"

namespace gbh::train {

namespace fs = std::filesystem;

inline constexpr double kMosaicOffFraction = 0.1;

struct TrainOptions {
  std::size_t epochs = 500;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double mosaic = 1.0;
  double mosaic_off_fraction = kMosaicOffFraction;
  bool adaptive_anchors = true;
  std::size_t pr_every = 0;          // train-set P/R every N epochs; 0 disables
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::string out_dir;               // empty: nothing is written
  DetectOptions detect;
  double match_iou = eval::kMatchIou;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double loss = 0;
  double box = 0;
  double obj = 0;
  double cls = 0;
  bool mosaic = false;
};

struct PrStats {
  std::size_t epoch = 0;
  double precision = 0;
  double recall = 0;
  double map = 0;
};

// Non-finite loss. Nothing from the offending step is applied.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(std::size_t epoch, std::size_t step)
      : NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                     std::to_string(step)),
        epoch_(epoch),
        step_(step) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t epoch_;
  std::size_t step_;
};

// Box extents after letterboxing each image to `input_size`.
inline std::vector<model::Anchor> input_extents(const std::vector<data::AnnotatedImage>& items,
                                                std::size_t input_size) {
  std::vector<model::Anchor> out;
  for (const auto& a : items) {
    const double s = data::letterbox_transform(a.image.width, a.image.height, input_size).scale;
    for (const auto& g : a.boxes) out.push_back({g.box.w * s, g.box.h * s});
  }
  return out;
}

class Trainer {
 public:
  // Fresh run. Anchors are clustered from the training boxes unless
  // disabled or the variant already carries a set.
  Trainer(model::ModelVariant variant, std::vector<data::AnnotatedImage> train, TrainOptions opt)
      : train_(std::move(train)), opt_(std::move(opt)) {
    check_options();
    if (opt_.adaptive_anchors && variant.anchors.empty()) {
      if (variant.head_strides.empty()) variant.head_strides = variant.expected_strides();
      const auto r = data::adaptive_anchors(input_extents(train_, variant.input_size), variant.head_strides,
                                            variant.anchors_per_head, variant.input_size, {.seed = opt_.seed});
      anchor_warning_ = r.warning;
      variant.anchors = r.anchors;
    }
    model_ = std::make_unique<model::Model<float>>(std::move(variant), opt_.seed);
    start_logs(false);
  }

  // Resumes from a checkpoint written by save(); the epoch counter and
  // optimizer state continue from it.
  Trainer(const std::string& checkpoint, std::vector<data::AnnotatedImage> train, TrainOptions opt)
      : train_(std::move(train)), opt_(std::move(opt)) {
    check_options();
    auto ck = model::load_checkpoint(checkpoint);
    model_ = std::move(ck.model);
    epoch_ = ck.epoch;
    restore_adam(ck, checkpoint);
    start_logs(true);
  }

  model::Model<float>& model() { return *model_; }
  const model::Model<float>& model() const { return *model_; }
  std::size_t epoch() const { return epoch_; }
  bool done() const { return epoch_ >= opt_.epochs; }
  const std::vector<EpochStats>& history() const { return history_; }
  const std::vector<PrStats>& pr_history() const { return pr_history_; }
  const std::string& anchor_warning() const { return anchor_warning_; }
  const TrainOptions& options() const { return opt_; }

  // Mosaic is off for the final `mosaic_off_fraction` of epochs (1-based).
  bool mosaic_active(std::size_t epoch) const {
    const auto off = static_cast<std::size_t>(std::llround(opt_.mosaic_off_fraction * static_cast<double>(opt_.epochs)));
    return opt_.mosaic > 0 && epoch + off <= opt_.epochs;
  }

  EpochStats train_epoch() {
    if (train_.empty()) throw ContractError("train_epoch: empty training set");
    const std::size_t e = ++epoch_;
    auto rng = data::item_rng(opt_.seed, e);
    std::vector<std::size_t> order(train_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    const auto& v = model_->variant();
    const std::size_t size = v.input_size;
    const bool mosaic = mosaic_active(e);
    std::bernoulli_distribution use_mosaic(mosaic ? opt_.mosaic : 0.0);
    std::uniform_int_distribution<std::size_t> pick(0, train_.size() - 1);
    const auto params = model_->parameters();
    model_->set_training(true);

    EpochStats st;
    st.epoch = e;
    st.mosaic = mosaic;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += opt_.batch_size, ++steps) {
      const std::size_t n = std::min(opt_.batch_size, order.size() - start);
      Tensor<float> x = Tensor<float>::zeros({n, 3, size, size});
      std::vector<std::vector<GroundTruth>> gts(n);
      for (std::size_t b = 0; b < n; ++b) {
        const auto& item = train_[order[start + b]];
        data::AnnotatedImage sample;
        if (use_mosaic(rng)) {
          std::array<const data::AnnotatedImage*, 4> four = {&item, nullptr, nullptr, nullptr};
          for (std::size_t k = 1; k < 4; ++k) four[k] = &train_[pick(rng)];
          sample = data::mosaic4(four, size, rng);
        } else {
          sample = data::letterbox(item, size);
        }
        data::write_to_batch(sample.image, x, b);
        gts[b] = std::move(sample.boxes);
      }

      Tape<float> tape;
      TapeScope<float> scope(tape);
      model_->zero_grad();
      const auto heads = model_->forward(x);
      const auto lb = detection_loss(heads, gts, v.anchors, v.head_strides, size);
      if (!std::isfinite(lb.total)) throw TrainingDiverged(e, steps + 1);
      tape.backward(lb.loss);
      adam_step(params, adam_, AdamOptions{.lr = opt_.lr});
      st.loss += lb.total;
      st.box += lb.box;
      st.obj += lb.obj;
      st.cls += lb.cls;
    }
    const auto ns = static_cast<double>(steps);
    st.loss /= ns;
    st.box /= ns;
    st.obj /= ns;
    st.cls /= ns;
    history_.push_back(st);
    log_epoch(st);

    if (opt_.pr_every && (e % opt_.pr_every == 0 || e == opt_.epochs)) {
      const auto rep = evaluate(train_);
      PrStats p{e, rep.pr.precision, rep.pr.recall, rep.map.value_or(0.0)};
      pr_history_.push_back(p);
      log_pr(p);
    }
    if (!opt_.out_dir.empty() && opt_.checkpoint_every && e % opt_.checkpoint_every == 0) {
      save((fs::path(opt_.out_dir) / ("epoch_" + std::to_string(e) + ".gbhw")).string());
    }
    return st;
  }

  // Trains until the configured epoch count; writes last.gbhw when an output
  // directory is set.
  void fit(const std::function<void(const EpochStats&)>& on_epoch = {}) {
    while (!done()) {
      const auto st = train_epoch();
      if (on_epoch) on_epoch(st);
    }
    if (!opt_.out_dir.empty()) save((fs::path(opt_.out_dir) / "last.gbhw").string());
  }

  // Evaluation report on `items` with the model in inference mode.
  eval::EvalReport evaluate(const std::vector<data::AnnotatedImage>& items) {
    eval::EvalOptions eo;
    eo.iou_threshold = opt_.match_iou;
    eo.conf_threshold = opt_.detect.conf_threshold;
    eo.num_classes = model_->variant().num_classes;
    return eval::evaluate(collect_results(*model_, items, opt_.detect), eo);
  }

  // Mean loss on letterboxed `items` in inference mode, without updates.
  double mean_loss(const std::vector<data::AnnotatedImage>& items) {
    if (items.empty()) return 0;
    const auto& v = model_->variant();
    const std::size_t size = v.input_size;
    model_->set_training(false);
    NoGradScope<float> no_grad;
    double sum = 0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < items.size(); start += opt_.batch_size, ++steps) {
      const std::size_t n = std::min(opt_.batch_size, items.size() - start);
      Tensor<float> x = Tensor<float>::zeros({n, 3, size, size});
      std::vector<std::vector<GroundTruth>> gts(n);
      for (std::size_t b = 0; b < n; ++b) {
        auto s = data::letterbox(items[start + b], size);
        data::write_to_batch(s.image, x, b);
        gts[b] = std::move(s.boxes);
      }
      sum += detection_loss(model_->forward(x), gts, v.anchors, v.head_strides, size).total;
    }
    return sum / static_cast<double>(steps);
  }

  void save(const std::string& path) const {
    std::vector<model::RawTensor> extras;
    extras.push_back({"adam.step", {1}, {static_cast<float>(adam_.step)}});
    for (std::size_t i = 0; i < adam_.m.size(); ++i) {
      extras.push_back({"adam.m." + std::to_string(i), {adam_.m[i].size()}, to_float(adam_.m[i])});
      extras.push_back({"adam.v." + std::to_string(i), {adam_.v[i].size()}, to_float(adam_.v[i])});
    }
    model::save_checkpoint(*model_, path, epoch_, extras);
  }

 private:
  void check_options() const {
    if (opt_.batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (opt_.epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(opt_.lr > 0)) throw ConfigError("lr must be positive");
  }

  static std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

  void restore_adam(const model::Checkpoint& ck, const std::string& path) {
    auto it = ck.extras.find("adam.step");
    if (it == ck.extras.end()) return;  // weights-only checkpoint: fresh optimizer
    adam_.step = static_cast<std::size_t>(it->second.values.at(0));
    const auto params = model_->parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto m = ck.extras.find("adam.m." + std::to_string(i));
      auto v = ck.extras.find("adam.v." + std::to_string(i));
      if (m == ck.extras.end() || v == ck.extras.end() || m->second.values.size() != params[i].numel() ||
          v->second.values.size() != params[i].numel()) {
        throw CheckpointError(path + ": optimizer state does not match the model");
      }
      adam_.m.emplace_back(m->second.values.begin(), m->second.values.end());
      adam_.v.emplace_back(v->second.values.begin(), v->second.values.end());
    }
  }

  void start_logs(bool append) {
    if (opt_.out_dir.empty()) return;
    fs::create_directories(opt_.out_dir);
    const auto mode = append ? std::ios::app : std::ios::trunc;
    const auto losses = fs::path(opt_.out_dir) / "losses.csv";
    const auto pr = fs::path(opt_.out_dir) / "pr.csv";
    const bool fresh_losses = !append || !fs::exists(losses);
    const bool fresh_pr = !append || !fs::exists(pr);
    std::ofstream l(losses, mode);
    if (!l) throw IoError(losses.string() + ": cannot open for writing");
    if (fresh_losses) l << "epoch,loss,box,obj,cls,mosaic\n";
    std::ofstream p(pr, mode);
    if (!p) throw IoError(pr.string() + ": cannot open for writing");
    if (fresh_pr) p << "epoch,P,R,mAP50\n";
  }

  void log_epoch(const EpochStats& s) const {
    if (opt_.out_dir.empty()) return;
    std::ofstream l(fs::path(opt_.out_dir) / "losses.csv", std::ios::app);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%d\n", s.epoch, s.loss, s.box, s.obj, s.cls,
                  s.mosaic ? 1 : 0);
    l << buf;
  }

  void log_pr(const PrStats& p) const {
    if (opt_.out_dir.empty()) return;
    std::ofstream l(fs::path(opt_.out_dir) / "pr.csv", std::ios::app);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f\n", p.epoch, p.precision, p.recall, p.map);
    l << buf;
  }

  std::vector<data::AnnotatedImage> train_;
  TrainOptions opt_;
  std::unique_ptr<model::Model<float>> model_;
  AdamState adam_;
  std::size_t epoch_ = 0;
  std::vector<EpochStats> history_;
  std::vector<PrStats> pr_history_;
  std::string anchor_warning_;
};

}  // namespace gbh::train
