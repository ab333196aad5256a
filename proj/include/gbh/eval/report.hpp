// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

// Evaluation report rendering: a per-class text table, a metrics CSV
//   class,AP,TP,FP,FN,P,R   (one row per class, then an mAP footer)
// and one PR-curve CSV per class
//   rank,confidence,tp,precision,recall

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gbh/core/error.hpp"
#include "gbh/eval/metrics.hpp"

namespace gbh::eval {

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

inline std::string exact(double v) { return fmt("%.17g", v); }

}  // namespace detail

inline std::string format_table(const EvalReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-16s %8s %8s %8s %6s %6s %6s\n", "class", "AP(%)", "P(%)", "R(%)", "TP", "FP",
                "FN");
  os << line;
  for (const auto& c : r.classes) {
    const std::string ap = c.ap ? detail::fmt("%.1f", *c.ap * 100) : "-";
    std::snprintf(line, sizeof(line), "%-16s %8s %8.1f %8.1f %6zu %6zu %6zu\n", class_name(c.class_id).c_str(),
                  ap.c_str(), c.pr.precision * 100, c.pr.recall * 100, c.counts.tp, c.counts.fp, c.counts.fn);
    os << line;
  }
  const std::string map = r.map ? detail::fmt("%.1f", *r.map * 100) : "-";
  std::snprintf(line, sizeof(line), "%-16s %8s %8.1f %8.1f %6zu %6zu %6zu\n", "all (mAP)", map.c_str(),
                r.pr.precision * 100, r.pr.recall * 100, r.counts.tp, r.counts.fp, r.counts.fn);
  os << line;
  std::snprintf(line, sizeof(line), "images %zu, boxes %zu, IoU %.2f, confidence %.3f\n", r.images, r.gt_boxes,
                r.iou_threshold, r.conf_threshold);
  os << line;
  return os.str();
}

// AP is empty for classes with neither ground truth nor detections.
inline std::string metrics_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "class,AP,TP,FP,FN,P,R\n";
  for (const auto& c : r.classes) {
    os << class_name(c.class_id) << ',' << (c.ap ? detail::exact(*c.ap) : "") << ',' << c.counts.tp << ','
       << c.counts.fp << ',' << c.counts.fn << ',' << detail::exact(c.pr.precision) << ','
       << detail::exact(c.pr.recall) << '\n';
  }
  os << "mAP," << (r.map ? detail::exact(*r.map) : "") << ",,,,,\n";
  return os.str();
}

inline std::string pr_curve_csv(const ClassReport& c) {
  std::ostringstream os;
  os << "rank,confidence,tp,precision,recall\n";
  for (std::size_t k = 0; k < c.curve.size(); ++k) {
    const auto& p = c.curve[k];
    os << k + 1 << ',' << detail::exact(p.confidence) << ',' << (p.tp ? 1 : 0) << ',' << detail::exact(p.precision)
       << ',' << detail::exact(p.recall) << '\n';
  }
  return os.str();
}

inline std::vector<PrPoint> parse_pr_curve_csv(const std::string& text, const std::string& source = "pr curve") {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "rank,confidence,tp,precision,recall") {
    throw ParseError(source, "header", "expected rank,confidence,tp,precision,recall");
  }
  std::vector<PrPoint> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[5];
    for (auto& x : f) {
      if (!std::getline(ls, x, ',')) throw ParseError(source, "row", "expected 5 fields in '" + line + "'");
    }
    try {
      PrPoint p;
      p.confidence = std::stod(f[1]);
      p.tp = f[2] == "1";
      p.precision = std::stod(f[3]);
      p.recall = std::stod(f[4]);
      out.push_back(p);
    } catch (const std::exception&) {
      throw ParseError(source, "row", "non-numeric field in '" + line + "'");
    }
  }
  return out;
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw IoError(p.string() + ": cannot open for writing");
  out << text;
  if (!out) throw IoError(p.string() + ": write failed");
}

}  // namespace detail

// Writes report.txt, metrics.csv and pr_<class>.csv into `dir`.
inline void write_report(const std::filesystem::path& dir, const EvalReport& r) {
  std::filesystem::create_directories(dir);
  detail::write_text(dir / "report.txt", format_table(r));
  detail::write_text(dir / "metrics.csv", metrics_csv(r));
  for (const auto& c : r.classes) {
    detail::write_text(dir / ("pr_" + class_name(c.class_id) + ".csv"), pr_curve_csv(c));
  }
}

}  // namespace gbh::eval
