// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

// gbh: command-line front end.
//
// Exit codes: 0 success, 1 partial I/O or runtime failure, 2 configuration
// or contract error.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gbh/gbh.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;

using gbh::train::RunConfig;

struct Args {
  RunConfig cfg;
  bool variant_given = false;

  // preprocess
  std::string raw;
  std::size_t crop = gbh::data::kCropSize;
  double dilation = gbh::data::kClusterDilation;
  double val_fraction = 0.2;

  // synth
  std::size_t count = 16;
  std::size_t size = 600;
  std::size_t max_defects = 2;
  std::size_t scratch_groups = 0;
  std::size_t scratch_group = 3;

  // eval
  std::string split = "val";
  std::string detections;

  // detect
  std::vector<std::string> images;

  // bench
  std::vector<std::string> variants;
  std::size_t reps = 5;
  std::string csv;
};

void require_dir(const std::string& path, const std::string& what) {
  if (path.empty()) throw gbh::ConfigError(what + " is required");
  if (!fs::is_directory(path)) throw gbh::ConfigError(what + " '" + path + "' is not a directory");
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw gbh::ConfigError(what + " is required");
  if (!fs::is_regular_file(path)) throw gbh::ConfigError(what + " '" + path + "' does not exist");
}

std::string out_dir_or(const RunConfig& cfg, const std::string& fallback) {
  return cfg.out.empty() ? fallback : cfg.out;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw gbh::IoError(p.string() + ": cannot open for writing");
  out << text;
}

std::vector<std::string> split_train_first(std::vector<std::string> ids, double val_fraction, std::uint64_t seed,
                                           std::vector<std::string>& val) {
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto nval = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(ids.size())));
  val.assign(ids.end() - static_cast<long>(nval), ids.end());
  ids.resize(ids.size() - nval);
  std::sort(val.begin(), val.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

// ---------------------------------------------------------------- preprocess

// Raw inputs: annotations in <raw>/annotations or <raw>, images in
// <raw>/images or <raw>.
int cmd_preprocess(const Args& a) {
  require_dir(a.raw, "--raw");
  if (a.cfg.out.empty()) throw gbh::ConfigError("--out is required");
  if (!(a.val_fraction >= 0 && a.val_fraction <= 1)) throw gbh::ConfigError("--val_fraction must lie in [0, 1]");
  const fs::path raw(a.raw);
  const fs::path ann_dir = fs::is_directory(raw / "annotations") ? raw / "annotations" : raw;
  const fs::path img_dir = fs::is_directory(raw / "images") ? raw / "images" : raw;

  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(ann_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".xml") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());

  gbh::data::CropOptions opt;
  opt.crop = a.crop;
  opt.dilation = a.dilation;
  const fs::path out(a.cfg.out);
  gbh::data::ensure_layout(out);

  std::vector<std::string> ok_raw;
  std::map<std::string, std::vector<std::string>> crops_of;
  std::vector<std::string> errors;
  for (const auto& id : ids) {
    try {
      const auto ann = gbh::data::parse_voc_xml((ann_dir / (id + ".xml")).string());
      fs::path img_path;
      for (const char* ext : {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"}) {
        if (fs::exists(img_dir / (id + ext))) {
          img_path = img_dir / (id + ext);
          break;
        }
      }
      if (img_path.empty()) throw gbh::IoError((img_dir / id).string() + ": no PNG or JPEG image");
      gbh::data::AnnotatedImage item;
      item.id = id;
      item.image = gbh::data::load_image(img_path.string());
      if (item.image.width != ann.width || item.image.height != ann.height) {
        throw gbh::ParseError((ann_dir / (id + ".xml")).string(), "size", "does not match the image");
      }
      item.boxes = ann.boxes;
      for (const auto& c : gbh::data::preprocess_crop(item, opt)) {
        gbh::data::write_item(out, c);
        crops_of[id].push_back(c.id);
      }
      ok_raw.push_back(id);
    } catch (const gbh::Error& e) {
      errors.push_back(e.what());
    }
  }

  std::vector<std::string> val_raw;
  const auto train_raw = split_train_first(ok_raw, a.val_fraction, a.cfg.seed, val_raw);
  gbh::data::DatasetSplit split;
  for (const auto& id : train_raw) {
    for (const auto& c : crops_of[id]) split.train.push_back(c);
  }
  for (const auto& id : val_raw) {
    for (const auto& c : crops_of[id]) split.val.push_back(c);
  }
  gbh::data::write_split(out, split);
  std::cout << "preprocess: " << ok_raw.size() << " raw images -> " << split.train.size() << " train and "
            << split.val.size() << " val crops in " << out.string() << "\n";
  if (!errors.empty()) {
    std::cerr << "errors (" << errors.size() << " of " << ids.size() << " files):\n";
    for (const auto& e : errors) std::cerr << "  " << e << "\n";
    return kExitPartial;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- synth

int cmd_synth(const Args& a) {
  if (a.cfg.out.empty()) throw gbh::ConfigError("--out is required");
  if (!(a.val_fraction >= 0 && a.val_fraction <= 1)) throw gbh::ConfigError("--val_fraction must lie in [0, 1]");
  gbh::data::CorpusOptions opt;
  opt.count = a.count;
  opt.size = a.size;
  opt.seed = a.cfg.seed;
  opt.max_defects = a.max_defects;
  opt.scratch_groups = a.scratch_groups;
  opt.scratch_group = a.scratch_group;
  const auto items = gbh::data::synth_corpus(opt);
  const fs::path out(a.cfg.out);
  gbh::data::DatasetSplit split;
  const auto nval = static_cast<std::size_t>(std::llround(a.val_fraction * static_cast<double>(items.size())));
  for (std::size_t i = 0; i < items.size(); ++i) {
    gbh::data::write_item(out, items[i]);
    (i + nval < items.size() ? split.train : split.val).push_back(items[i].id);
  }
  gbh::data::write_split(out, split);
  std::size_t boxes = 0;
  for (const auto& it : items) boxes += it.boxes.size();
  std::cout << "synth: " << items.size() << " images, " << boxes << " boxes (" << split.train.size() << " train, "
            << split.val.size() << " val) in " << out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- anchors

int cmd_anchors(const Args& a) {
  require_dir(a.cfg.data, "--data");
  const auto v = a.cfg.model_variant();
  const auto split = gbh::data::read_split(a.cfg.data);
  std::vector<gbh::model::Anchor> extents;
  for (const auto& id : split.train) {
    const auto ann = gbh::data::parse_voc_xml((fs::path(a.cfg.data) / "annotations" / (id + ".xml")).string());
    const double s = gbh::data::letterbox_transform(ann.width, ann.height, v.input_size).scale;
    for (const auto& g : ann.boxes) extents.push_back({g.box.w * s, g.box.h * s});
  }
  const auto r = gbh::data::adaptive_anchors(extents, v.head_strides, v.anchors_per_head, v.input_size,
                                             {.seed = a.cfg.seed});
  if (r.fallback) std::cerr << "warning: " << r.warning << "\n";
  for (std::size_t h = 0; h < r.anchors.size(); ++h) {
    std::printf("stride %zu:", v.head_strides[h]);
    for (const auto& an : r.anchors[h]) std::printf(" %.1fx%.1f", an.w, an.h);
    std::printf("\n");
  }
  std::printf("boxes %zu, coverage %.4f at ratio gate %.1f\n", extents.size(),
              gbh::data::anchor_coverage(extents, r.anchors), gbh::kDefaultRatioGate);
  return kExitOk;
}

// ---------------------------------------------------------------- train

gbh::train::TrainOptions train_options(const RunConfig& c, const std::string& out) {
  gbh::train::TrainOptions o;
  o.epochs = c.epochs;
  o.batch_size = c.batch_size;
  o.lr = c.lr;
  o.seed = c.seed;
  o.mosaic = c.mosaic;
  o.pr_every = c.pr_every;
  o.checkpoint_every = c.checkpoint_every;
  o.out_dir = out;
  o.detect.conf_threshold = c.conf_threshold;
  o.detect.iou_threshold = c.iou_threshold;
  o.match_iou = c.match_iou;
  return o;
}

int cmd_train(const Args& a) {
  const auto& c = a.cfg;
  const auto variant = c.model_variant();
  require_dir(c.data, "--data");
  if (!c.checkpoint.empty()) require_file(c.checkpoint, "--checkpoint");
  const auto split = gbh::data::read_split(c.data);
  if (split.train.empty()) throw gbh::ConfigError(c.data + ": empty training split");
  const std::string out = out_dir_or(c, "runs/train");
  auto train_items = gbh::data::load_items(c.data, split.train);

  auto opt = train_options(c, out);
  std::unique_ptr<gbh::train::Trainer> tr;
  if (c.checkpoint.empty()) {
    tr = std::make_unique<gbh::train::Trainer>(variant, std::move(train_items), opt);
  } else {
    auto ck = gbh::model::load_checkpoint(c.checkpoint, a.variant_given ? c.variant : std::string());
    tr = std::make_unique<gbh::train::Trainer>(c.checkpoint, std::move(train_items), opt);
    std::cout << "resuming at epoch " << tr->epoch() << "\n";
  }
  if (!tr->anchor_warning().empty()) std::cerr << "warning: " << tr->anchor_warning() << "\n";
  tr->fit([&](const gbh::train::EpochStats& s) {
    std::printf("epoch %zu/%zu loss %.6f box %.6f obj %.6f cls %.6f%s\n", s.epoch, c.epochs, s.loss, s.box, s.obj,
                s.cls, s.mosaic ? " mosaic" : "");
    std::fflush(stdout);
  });
  std::cout << "checkpoint: " << (fs::path(out) / "last.gbhw").string() << "\n";

  // The validation split is read only here, after training.
  if (!split.val.empty()) {
    const auto val = gbh::data::load_items(c.data, split.val);
    const double val_loss = tr->mean_loss(val);
    const auto rep = tr->evaluate(val);
    gbh::eval::write_report(fs::path(out) / "val", rep);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "split,loss,mAP50,P,R\nval,%.9g,%.9g,%.9g,%.9g\n", val_loss,
                  rep.map.value_or(0.0), rep.pr.precision, rep.pr.recall);
    write_text(fs::path(out) / "final.csv", buf);
    std::printf("val loss %.6f\n%s", val_loss, gbh::eval::format_table(rep).c_str());
  }
  return kExitOk;
}

// ---------------------------------------------------------------- eval

std::vector<std::string> split_ids(const RunConfig& c, const std::string& which) {
  const auto s = gbh::data::read_split(c.data);
  if (which == "val") return s.val;
  if (which == "train") return s.train;
  throw gbh::ConfigError("--split must be train or val");
}

int cmd_eval(const Args& a) {
  const auto& c = a.cfg;
  c.validate();
  require_dir(c.data, "--data");
  const auto ids = split_ids(c, a.split);
  gbh::eval::EvalOptions eo;
  eo.iou_threshold = c.match_iou;
  eo.conf_threshold = c.conf_threshold;

  std::vector<gbh::eval::ImageResult> results;
  if (!a.detections.empty()) {
    require_file(a.detections, "--detections");
    std::map<std::string, std::vector<gbh::Detection>> by_image;
    std::ifstream in(a.detections);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      gbh::DetectionRecord rec;
      if (!gbh::parse_detection(line, rec)) {
        throw gbh::ParseError(a.detections, "line " + std::to_string(lineno), "malformed detection record");
      }
      by_image[rec.image_id].push_back(rec.det);
    }
    for (const auto& id : ids) {
      const auto ann = gbh::data::parse_voc_xml((fs::path(c.data) / "annotations" / (id + ".xml")).string());
      results.push_back({id, by_image[id], ann.boxes});
    }
  } else {
    require_file(c.checkpoint, "--checkpoint");
    auto ck = gbh::model::load_checkpoint(c.checkpoint, a.variant_given ? c.variant : std::string());
    const auto items = gbh::data::load_items(c.data, ids);
    gbh::DetectOptions d;
    d.iou_threshold = c.iou_threshold;
    results = gbh::collect_results(*ck.model, items, d);
    eo.num_classes = ck.model->variant().num_classes;
  }
  const auto rep = gbh::eval::evaluate(results, eo);
  std::cout << gbh::eval::format_table(rep);
  if (!c.out.empty()) gbh::eval::write_report(c.out, rep);
  return kExitOk;
}

// ---------------------------------------------------------------- detect

int cmd_detect(const Args& a) {
  const auto& c = a.cfg;
  c.validate();
  require_file(c.checkpoint, "--checkpoint");
  if (a.images.empty()) throw gbh::ConfigError("no images given");
  auto ck = gbh::model::load_checkpoint(c.checkpoint, a.variant_given ? c.variant : std::string());
  auto& m = *ck.model;
  gbh::DetectOptions d;
  d.conf_threshold = c.conf_threshold;
  d.iou_threshold = c.iou_threshold;
  if (!c.out.empty()) fs::create_directories(c.out);

  std::size_t failed = 0;
  for (const auto& path : a.images) {
    const std::string id = fs::path(path).stem().string();
    gbh::data::Image img;
    try {
      img = gbh::data::load_image(path);
    } catch (const gbh::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      ++failed;
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto dets = gbh::detect_images(m, {&img}, d).front();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& det : dets) std::cout << gbh::format_detection(id, det) << "\n";
    std::printf("time %s %.6f s\n", id.c_str(), secs);
    if (!c.out.empty()) {
      for (const auto& det : dets) gbh::data::draw_detection(img, det.box, gbh::class_name(det.class_id), det.confidence);
      gbh::data::save_png(img, (fs::path(c.out) / (id + ".png")).string());
    }
  }
  return failed ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------- bench / param-count

gbh::model::ModelVariant make_variant(const RunConfig& c, const std::string& name) {
  RunConfig v = c;
  v.variant = name;
  return v.model_variant();
}

int cmd_param_count(const Args& a) {
  const auto& c = a.cfg;
  std::vector<std::string> names = a.variants;
  if (names.empty()) names.push_back(c.variant);
  std::printf("%-10s %12s %8s %16s\n", "variant", "params", "modules", "flops");
  for (const auto& n : names) {
    const gbh::model::Model<float> m(make_variant(c, n), c.seed);
    std::printf("%-10s %12zu %8zu %16llu\n", n.c_str(), m.count_params(), m.count_modules(),
                static_cast<unsigned long long>(m.count_flops(m.variant().input_size)));
  }
  return kExitOk;
}

int cmd_bench(const Args& a) {
  const auto& c = a.cfg;
  c.validate();
  if (a.reps < 1) throw gbh::ConfigError("--reps must be at least 1");
  std::vector<std::string> names = a.variants;
  if (names.empty()) {
    for (auto n : gbh::model::kVariantNames) names.emplace_back(n);
  }
  std::printf("host: %u hardware threads, compiler %s\n", std::thread::hardware_concurrency(), __VERSION__);
  std::ostringstream csv;
  csv << "variant,params,modules,flops,median_s\n";
  std::printf("%-10s %12s %8s %16s %10s\n", "variant", "params", "modules", "flops", "median_s");
  for (const auto& n : names) {
    gbh::model::Model<float> m(make_variant(c, n), c.seed);
    m.set_training(false);
    const std::size_t s = m.variant().input_size;
    gbh::Tensor<float> x({1, 3, s, s});
    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<float> u(0, 1);
    for (auto& p : x.data()) p = u(rng);
    gbh::NoGradScope<float> no_grad;
    (void)m.forward(x);  // warm-up
    std::vector<double> t;
    for (std::size_t r = 0; r < a.reps; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      (void)m.forward(x);
      t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(t.begin(), t.end());
    const double med = t.size() % 2 ? t[t.size() / 2] : 0.5 * (t[t.size() / 2 - 1] + t[t.size() / 2]);
    const auto flops = static_cast<unsigned long long>(m.count_flops(s));
    std::printf("%-10s %12zu %8zu %16llu %10.4f\n", n.c_str(), m.count_params(), m.count_modules(), flops, med);
    csv << n << ',' << m.count_params() << ',' << m.count_modules() << ',' << flops << ',' << med << '\n';
  }
  if (!a.csv.empty()) write_text(a.csv, csv.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GBH PV panel defect detector"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "flat key = value file; every key is also a flag", false);
  app.allow_config_extras(CLI::config_extras_mode::error);

  Args a;
  auto& c = a.cfg;
  auto* variant_opt = app.add_option("--variant", c.variant, "yolov5s | yolov5-1 | yolov5-2 | gbh");
  app.add_option("--profile", c.profile, "standard | tiny");
  app.add_option("--input_size", c.input_size, "network input (0: profile default)");
  app.add_option("--epochs", c.epochs);
  app.add_option("--batch_size", c.batch_size);
  app.add_option("--lr", c.lr);
  app.add_option("--seed", c.seed);
  app.add_option("--data", c.data, "dataset root");
  app.add_option("--out", c.out, "output directory");
  app.add_option("--checkpoint", c.checkpoint, "checkpoint to evaluate, detect with, or resume from");
  app.add_option("--checkpoint_every", c.checkpoint_every);
  app.add_option("--pr_every", c.pr_every);
  app.add_option("--mosaic", c.mosaic, "mosaic probability");
  app.add_option("--conf_threshold", c.conf_threshold);
  app.add_option("--iou_threshold", c.iou_threshold, "NMS IoU");
  app.add_option("--match_iou", c.match_iou, "evaluation matching IoU");

  auto* pre = app.add_subcommand("preprocess", "crop raw panels into a 600x600 corpus");
  pre->add_option("--raw", a.raw, "raw directory")->required();
  pre->add_option("--crop", a.crop);
  pre->add_option("--dilation", a.dilation);
  pre->add_option("--val_fraction", a.val_fraction);

  auto* anc = app.add_subcommand("anchors", "cluster anchors from the training split");

  auto* syn = app.add_subcommand("synth", "generate a synthetic corpus");
  syn->add_option("--count", a.count);
  syn->add_option("--size", a.size);
  syn->add_option("--max_defects", a.max_defects);
  syn->add_option("--scratch_groups", a.scratch_groups);
  syn->add_option("--scratch_group", a.scratch_group);
  syn->add_option("--val_fraction", a.val_fraction);

  auto* trn = app.add_subcommand("train", "train a model");

  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint or a detection file");
  evl->add_option("--split", a.split, "train | val");
  evl->add_option("--detections", a.detections, "evaluate these detection records instead of a model");

  auto* det = app.add_subcommand("detect", "detect defects in images");
  det->add_option("images", a.images, "image files")->required();

  auto* bench = app.add_subcommand("bench", "parameters, modules, FLOPs and latency per variant");
  bench->add_option("--variants", a.variants)->delimiter(',');
  bench->add_option("--reps", a.reps);
  bench->add_option("--csv", a.csv);

  auto* pc = app.add_subcommand("param-count", "parameters, modules and FLOPs");
  pc->add_option("--variants", a.variants)->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  a.variant_given = variant_opt->count() > 0;

  try {
    if (*pre) return cmd_preprocess(a);
    if (*anc) return cmd_anchors(a);
    if (*syn) return cmd_synth(a);
    if (*trn) return cmd_train(a);
    if (*evl) return cmd_eval(a);
    if (*det) return cmd_detect(a);
    if (*bench) return cmd_bench(a);
    if (*pc) return cmd_param_count(a);
  } catch (const gbh::train::TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPartial;
  } catch (const gbh::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
