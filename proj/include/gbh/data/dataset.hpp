// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

// Dataset directory layout:
//   images/<id>.png|.jpg|.jpeg
//   annotations/<id>.xml
//   splits/train.txt, splits/val.txt   (one id per line)

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "gbh/data/image_io.hpp"
#include "gbh/data/voc.hpp"
#include "gbh/model/variant.hpp"

namespace gbh::data {

namespace fs = std::filesystem;

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
};

inline std::vector<std::string> read_id_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    ids.push_back(line.substr(b, e - b + 1));
  }
  return ids;
}

inline void write_id_list(const fs::path& path, const std::vector<std::string>& ids) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  for (const auto& id : ids) out << id << '\n';
}

// Reads splits/train.txt and splits/val.txt; a missing val list is empty.
inline DatasetSplit read_split(const fs::path& root) {
  DatasetSplit s;
  s.train = read_id_list(root / "splits" / "train.txt");
  if (fs::exists(root / "splits" / "val.txt")) s.val = read_id_list(root / "splits" / "val.txt");
  std::set<std::string> train(s.train.begin(), s.train.end());
  for (const auto& id : s.val) {
    if (train.count(id)) throw ConfigError(root.string() + ": id '" + id + "' is in both train and val");
  }
  return s;
}

inline fs::path find_image(const fs::path& root, const std::string& id) {
  for (const char* ext : {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"}) {
    auto p = root / "images" / (id + ext);
    if (fs::exists(p)) return p;
  }
  throw IoError((root / "images" / id).string() + ": no PNG or JPEG image for this id");
}

// Loads the image and its annotation; the annotation's declared size must
// match the pixels.
inline AnnotatedImage load_item(const fs::path& root, const std::string& id) {
  const auto xml = (root / "annotations" / (id + ".xml")).string();
  const auto ann = parse_voc_xml(xml);
  AnnotatedImage a;
  a.id = id;
  a.image = load_image(find_image(root, id).string());
  if (a.image.width != ann.width || a.image.height != ann.height) {
    throw ParseError(xml, "size", "declares " + std::to_string(ann.width) + "x" + std::to_string(ann.height) +
                                      " but the image is " + std::to_string(a.image.width) + "x" +
                                      std::to_string(a.image.height));
  }
  a.boxes = ann.boxes;
  return a;
}

inline std::vector<AnnotatedImage> load_items(const fs::path& root, const std::vector<std::string>& ids) {
  std::vector<AnnotatedImage> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(load_item(root, id));
  return out;
}

inline void ensure_layout(const fs::path& root) {
  for (const char* d : {"images", "annotations", "splits"}) fs::create_directories(root / d);
}

// Writes images/<id>.png and annotations/<id>.xml.
inline void write_item(const fs::path& root, const AnnotatedImage& a) {
  ensure_layout(root);
  save_png(a.image, (root / "images" / (a.id + ".png")).string());
  VocAnnotation ann;
  ann.filename = a.id + ".png";
  ann.width = a.image.width;
  ann.height = a.image.height;
  ann.depth = 1;
  ann.boxes = a.boxes;
  write_voc_xml(ann, (root / "annotations" / (a.id + ".xml")).string());
}

inline void write_split(const fs::path& root, const DatasetSplit& s) {
  ensure_layout(root);
  write_id_list(root / "splits" / "train.txt", s.train);
  write_id_list(root / "splits" / "val.txt", s.val);
}

inline std::vector<model::Anchor> box_extents(const std::vector<AnnotatedImage>& items, double scale = 1.0) {
  std::vector<model::Anchor> out;
  for (const auto& a : items) {
    for (const auto& g : a.boxes) out.push_back({g.box.w * scale, g.box.h * scale});
  }
  return out;
}

}  // namespace gbh::data
