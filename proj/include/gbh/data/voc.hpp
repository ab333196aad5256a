// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

// VOC-style XML annotations:
//
//   <annotation>
//     <filename>img_001.png</filename>
//     <size><width>600</width><height>600</height><depth>1</depth></size>
//     <object>
//       <name>scratch</name>
//       <bndbox><xmin>10</xmin><ymin>10</ymin><xmax>14</xmax><ymax>42</ymax></bndbox>
//     </object>
//   </annotation>
//
// Corner coordinates are pixel edges, so width = xmax - xmin.

#pragma once

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gbh/core/error.hpp"
#include "gbh/detect/box.hpp"

namespace gbh::data {

struct VocAnnotation {
  std::string filename;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t depth = 1;
  std::vector<GroundTruth> boxes;
};

namespace detail {

namespace pt = boost::property_tree;

inline const pt::ptree& child(const pt::ptree& node, const std::string& key, const std::string& file,
                              const std::string& context) {
  auto it = node.find(key);
  if (it == node.not_found()) throw ParseError(file, context, "missing <" + key + ">");
  return it->second;
}

inline double number(const pt::ptree& node, const std::string& key, const std::string& file,
                     const std::string& context) {
  const std::string text = child(node, key, file, context).get_value<std::string>();
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError(file, context + "/" + key, "not a number: '" + text + "'");
  }
}

inline std::size_t extent(const pt::ptree& node, const std::string& key, const std::string& file) {
  const double v = number(node, key, file, "size");
  if (!(v >= 1) || v != static_cast<double>(static_cast<std::size_t>(v))) {
    throw ParseError(file, "size/" + key, "must be a positive integer");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace detail

// `source` names the document in error messages.
inline VocAnnotation parse_voc_string(const std::string& xml, const std::string& source) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(xml);
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(source, "annotation", std::string("malformed XML: ") + e.message() + " at line " +
                                               std::to_string(e.line()));
  }
  const auto& root = detail::child(tree, "annotation", source, "document");
  VocAnnotation ann;
  ann.filename = detail::child(root, "filename", source, "annotation").get_value<std::string>();
  const auto& size = detail::child(root, "size", source, "annotation");
  ann.width = detail::extent(size, "width", source);
  ann.height = detail::extent(size, "height", source);
  if (size.find("depth") != size.not_found()) ann.depth = detail::extent(size, "depth", source);

  std::size_t index = 0;
  for (const auto& [key, obj] : root) {
    if (key != "object") continue;
    const std::string where = "object[" + std::to_string(index++) + "]";
    const std::string name = detail::child(obj, "name", source, where).get_value<std::string>();
    const int cls = class_index(name);
    if (cls < 0) throw ParseError(source, where + "/name", "unknown class '" + name + "'");
    const auto& bb = detail::child(obj, "bndbox", source, where);
    const double x1 = detail::number(bb, "xmin", source, "bndbox");
    const double y1 = detail::number(bb, "ymin", source, "bndbox");
    const double x2 = detail::number(bb, "xmax", source, "bndbox");
    const double y2 = detail::number(bb, "ymax", source, "bndbox");
    if (!(x2 > x1) || !(y2 > y1)) {
      throw ParseError(source, "bndbox", where + " has max <= min");
    }
    if (x1 < 0 || y1 < 0 || x2 > static_cast<double>(ann.width) || y2 > static_cast<double>(ann.height)) {
      throw ParseError(source, "bndbox", where + " lies outside the " + std::to_string(ann.width) + "x" +
                                             std::to_string(ann.height) + " image");
    }
    ann.boxes.push_back({cls, Box::from_corners(x1, y1, x2, y2)});
  }
  return ann;
}

inline VocAnnotation parse_voc_xml(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_voc_string(buf.str(), path);
}

inline std::string format_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string to_voc_xml(const VocAnnotation& ann) {
  std::ostringstream os;
  os << "<annotation>\n"
     << "  <filename>" << ann.filename << "</filename>\n"
     << "  <size><width>" << ann.width << "</width><height>" << ann.height << "</height><depth>"
     << ann.depth << "</depth></size>\n";
  for (const auto& g : ann.boxes) {
    os << "  <object>\n"
       << "    <name>" << class_name(g.class_id) << "</name>\n"
       << "    <bndbox><xmin>" << format_coord(g.box.x1()) << "</xmin><ymin>" << format_coord(g.box.y1())
       << "</ymin><xmax>" << format_coord(g.box.x2()) << "</xmax><ymax>" << format_coord(g.box.y2())
       << "</ymax></bndbox>\n"
       << "  </object>\n";
  }
  os << "</annotation>\n";
  return os.str();
}

inline void write_voc_xml(const VocAnnotation& ann, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << to_voc_xml(ann);
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace gbh::data
