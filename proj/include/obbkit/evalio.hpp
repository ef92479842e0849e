// Copyright 2026 The obbkit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================
//
// Annotation and detection I/O, rotated detection metrics (recall, VOC07 and
// VOC12 AP, mAP) and IoU / regression-target histograms.
#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "obbkit/assignment.hpp"
#include "obbkit/encoding.hpp"
#include "obbkit/errors.hpp"
#include "obbkit/geometry.hpp"

namespace obbkit {

struct GroundTruthRecord {
  OrientedBox box;
  std::string category;
  bool difficult = false;
};

struct DetectionRecord {
  std::string image_id;
  OrientedBox box;
  std::string category;
  double score = 0.0;
};

// image id -> annotations of that image
using GroundTruthSet = std::map<std::string, std::vector<GroundTruthRecord>>;
using ProposalSet = std::map<std::string, std::vector<OrientedBox>>;

// ---------------------------------------------------------------------------
// Minimum-area enclosing rectangle

inline std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && detail::cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && detail::cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0.0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

// Rotating calipers over the hull edges; one rectangle side is always
// collinear with a hull edge. Result is canonicalized.
inline OrientedBox min_area_rect(const std::vector<Point>& points) {
  const std::vector<Point> hull = convex_hull(points);
  if (hull.size() < 3) throw InvalidBoxError("min_area_rect: polygon is degenerate");

  double best_area = INFINITY;
  OrientedBox best;
  for (std::size_t e = 0; e < hull.size(); ++e) {
    const Point& a = hull[e];
    const Point& b = hull[(e + 1) % hull.size()];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (len == 0.0) continue;
    const Point u{(b.x - a.x) / len, (b.y - a.y) / len};
    // With theta = atan2(-u.y, u.x) the local +y axis points along
    // (sin theta, cos theta) = (-u.y, u.x).
    const Point axis_y{-u.y, u.x};
    double umin = INFINITY, umax = -INFINITY, vmin = INFINITY, vmax = -INFINITY;
    for (const Point& p : hull) {
      const double pu = p.x * u.x + p.y * u.y;
      const double pv = p.x * axis_y.x + p.y * axis_y.y;
      umin = std::min(umin, pu);
      umax = std::max(umax, pu);
      vmin = std::min(vmin, pv);
      vmax = std::max(vmax, pv);
    }
    const double area = (umax - umin) * (vmax - vmin);
    if (area < best_area) {
      best_area = area;
      const double mu = (umin + umax) / 2.0;
      const double mv = (vmin + vmax) / 2.0;
      best = {mu * u.x + mv * axis_y.x, mu * u.y + mv * axis_y.y, umax - umin, vmax - vmin,
              std::atan2(-u.y, u.x) + 0.0};
    }
  }
  if (!(best.w > 0.0 && best.h > 0.0)) throw InvalidBoxError("min_area_rect: zero-area polygon");
  return canonicalize(best);
}

// ---------------------------------------------------------------------------
// Parsing helpers

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline void throw_collected(const std::string& what, const std::vector<std::string>& problems) {
  std::string msg = what;
  for (const auto& p : problems) msg += "\n  " + p;
  throw ParseError(msg);
}

}  // namespace detail

// DOTA annotation text: optional "imagesource:" / "gsd:" headers, then
// "x1 y1 x2 y2 x3 y3 x4 y4 category difficult" per object. Every malformed
// line is reported (1-based line numbers) in a single ParseError.
inline std::vector<GroundTruthRecord> parse_dota_annotation(std::string_view text) {
  std::vector<GroundTruthRecord> out;
  std::vector<std::string> problems;
  const auto lines = detail::split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string& line = lines[n];
    const std::string where = "line " + std::to_string(n + 1) + ": ";
    if (detail::is_blank(line)) continue;
    if (line.rfind("imagesource:", 0) == 0 || line.rfind("gsd:", 0) == 0) continue;
    const auto fields = detail::split_ws(line);
    if (fields.size() != 10) {
      problems.push_back(where + "expected 10 fields, got " + std::to_string(fields.size()));
      continue;
    }
    std::vector<Point> poly;
    bool ok = true;
    for (int k = 0; k < 4 && ok; ++k) {
      const auto x = detail::parse_double(fields[2 * k]);
      const auto y = detail::parse_double(fields[2 * k + 1]);
      if (!x || !y) {
        problems.push_back(where + "non-numeric coordinate in corner " + std::to_string(k + 1));
        ok = false;
      } else {
        poly.push_back({*x, *y});
      }
    }
    if (!ok) continue;
    if (fields[9] != "0" && fields[9] != "1") {
      problems.push_back(where + "difficult flag must be 0 or 1, got '" + std::string(fields[9]) + "'");
      continue;
    }
    try {
      out.push_back({min_area_rect(poly), std::string(fields[8]), fields[9] == "1"});
    } catch (const InvalidBoxError&) {
      problems.push_back(where + "degenerate polygon");
    }
  }
  if (!problems.empty()) detail::throw_collected("malformed DOTA annotation:", problems);
  return out;
}

inline std::string format_dota_annotation(const std::vector<GroundTruthRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    for (const Point& p : corners(r.box)) {
      out += detail::format_double(p.x) + " " + detail::format_double(p.y) + " ";
    }
    out += r.category + (r.difficult ? " 1\n" : " 0\n");
  }
  return out;
}

// Detection interchange: "image_id category score cx cy w h theta".
inline std::vector<DetectionRecord> parse_detections(std::string_view text) {
  std::vector<DetectionRecord> out;
  std::vector<std::string> problems;
  const auto lines = detail::split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (detail::is_blank(lines[n])) continue;
    const std::string where = "line " + std::to_string(n + 1) + ": ";
    const auto f = detail::split_ws(lines[n]);
    if (f.size() != 8) {
      problems.push_back(where + "expected 8 fields, got " + std::to_string(f.size()));
      continue;
    }
    std::array<double, 6> v{};
    bool ok = true;
    for (int k = 0; k < 6; ++k) {
      const auto d = detail::parse_double(f[2 + k]);
      if (!d) {
        ok = false;
        break;
      }
      v[k] = *d;
    }
    if (!ok) {
      problems.push_back(where + "non-numeric field");
      continue;
    }
    DetectionRecord rec{std::string(f[0]), {v[1], v[2], v[3], v[4], v[5]}, std::string(f[1]), v[0]};
    if (!(rec.score >= 0.0 && rec.score <= 1.0)) {
      problems.push_back(where + "score outside [0, 1]");
      continue;
    }
    if (!is_valid(rec.box)) {
      problems.push_back(where + "invalid box");
      continue;
    }
    out.push_back(std::move(rec));
  }
  if (!problems.empty()) detail::throw_collected("malformed detection file:", problems);
  return out;
}

inline std::string format_detections(const std::vector<DetectionRecord>& dets) {
  std::string out;
  for (const auto& d : dets) {
    out += d.image_id + " " + d.category + " " + detail::format_double(d.score) + " " +
           detail::format_double(d.box.cx) + " " + detail::format_double(d.box.cy) + " " +
           detail::format_double(d.box.w) + " " + detail::format_double(d.box.h) + " " +
           detail::format_double(d.box.theta) + "\n";
  }
  return out;
}

inline nlohmann::ordered_json detections_to_json(const std::vector<DetectionRecord>& dets) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& d : dets) {
    nlohmann::ordered_json j;
    j["image_id"] = d.image_id;
    j["category"] = d.category;
    j["score"] = d.score;
    j["cx"] = d.box.cx;
    j["cy"] = d.box.cy;
    j["w"] = d.box.w;
    j["h"] = d.box.h;
    j["theta"] = d.box.theta;
    arr.push_back(std::move(j));
  }
  return arr;
}

inline std::vector<DetectionRecord> detections_from_json(const nlohmann::ordered_json& arr) {
  if (!arr.is_array()) throw ParseError("detection JSON must be an array");
  std::vector<DetectionRecord> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    try {
      const auto& j = arr[i];
      DetectionRecord d{j.at("image_id").get<std::string>(),
                        {j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("w").get<double>(),
                         j.at("h").get<double>(), j.at("theta").get<double>()},
                        j.at("category").get<std::string>(),
                        j.at("score").get<double>()};
      if (!is_valid(d.box) || !(d.score >= 0.0 && d.score <= 1.0)) {
        throw ParseError("invalid box or score");
      }
      out.push_back(std::move(d));
    } catch (const std::exception& e) {
      throw ParseError("detection JSON entry " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

// Fraction of non-difficult gts covered by at least one proposal with
// IoU >= iou_thr (class-agnostic). Zero gts -> 0.
inline double recall(const ProposalSet& proposals, const GroundTruthSet& gts, double iou_thr = 0.5) {
  std::size_t total = 0, hit = 0;
  for (const auto& [image, records] : gts) {
    const auto it = proposals.find(image);
    for (const auto& gt : records) {
      if (gt.difficult) continue;
      ++total;
      if (it == proposals.end()) continue;
      for (const auto& p : it->second) {
        if (rotated_iou(p, gt.box) >= iou_thr) {
          ++hit;
          break;
        }
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

enum class ApMetric { kVoc07, kVoc12 };

inline ApMetric parse_metric(std::string_view s) {
  if (s == "voc07") return ApMetric::kVoc07;
  if (s == "voc12") return ApMetric::kVoc12;
  throw ConfigError("unknown metric '" + std::string(s) + "' (expected voc07 or voc12)");
}

struct PrCurve {
  std::vector<double> recall;
  std::vector<double> precision;
  std::size_t num_gt = 0;
};

// Greedy score-descending matching; all detections and gts are taken to be
// one category. Detections matching a difficult gt are dropped.
inline PrCurve precision_recall(const std::vector<DetectionRecord>& dets, const GroundTruthSet& gts,
                                double iou_thr = 0.5) {
  PrCurve out;
  std::map<std::string, std::vector<char>> used;
  for (const auto& [image, records] : gts) {
    used[image].assign(records.size(), 0);
    for (const auto& r : records) out.num_gt += !r.difficult;
  }
  std::vector<double> scores;
  scores.reserve(dets.size());
  for (const auto& d : dets) scores.push_back(d.score);
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t tp = 0, fp = 0;
  for (std::size_t i : order) {
    const DetectionRecord& d = dets[i];
    bool is_tp = false;
    const auto it = gts.find(d.image_id);
    if (it != gts.end()) {
      double best = -1.0;
      std::size_t arg = 0;
      for (std::size_t k = 0; k < it->second.size(); ++k) {
        const double iou = rotated_iou(d.box, it->second[k].box);
        if (iou > best) {
          best = iou;
          arg = k;
        }
      }
      if (best >= iou_thr) {
        if (it->second[arg].difficult) continue;
        char& flag = used[d.image_id][arg];
        if (!flag) {
          flag = 1;
          is_tp = true;
        }
      }
    }
    is_tp ? ++tp : ++fp;
    out.recall.push_back(out.num_gt ? static_cast<double>(tp) / static_cast<double>(out.num_gt) : 0.0);
    out.precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
  }
  return out;
}

inline double average_precision(const PrCurve& pr, ApMetric metric) {
  if (pr.num_gt == 0 || pr.recall.empty()) return 0.0;
  if (metric == ApMetric::kVoc07) {
    double ap = 0.0;
    for (int k = 0; k <= 10; ++k) {
      const double t = k / 10.0;
      double p = 0.0;
      for (std::size_t i = 0; i < pr.recall.size(); ++i) {
        if (pr.recall[i] >= t) p = std::max(p, pr.precision[i]);
      }
      ap += p;
    }
    return ap / 11.0;
  }
  std::vector<double> mrec{0.0}, mpre{0.0};
  mrec.insert(mrec.end(), pr.recall.begin(), pr.recall.end());
  mpre.insert(mpre.end(), pr.precision.begin(), pr.precision.end());
  mrec.push_back(1.0);
  mpre.push_back(0.0);
  for (std::size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  double ap = 0.0;
  for (std::size_t i = 1; i < mrec.size(); ++i) {
    if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
  }
  return ap;
}

inline double average_precision(const std::vector<DetectionRecord>& dets, const GroundTruthSet& gts,
                                double iou_thr = 0.5, ApMetric metric = ApMetric::kVoc12) {
  return average_precision(precision_recall(dets, gts, iou_thr), metric);
}

struct MapResult {
  std::map<std::string, double> per_class;
  double map = 0.0;
};

// Unweighted mean of per-category AP over categories with at least one
// non-difficult gt.
inline MapResult mean_ap(const std::vector<DetectionRecord>& dets, const GroundTruthSet& gts,
                         double iou_thr = 0.5, ApMetric metric = ApMetric::kVoc12) {
  std::set<std::string> categories;
  for (const auto& [image, records] : gts)
    for (const auto& r : records)
      if (!r.difficult) categories.insert(r.category);

  MapResult out;
  for (const auto& cat : categories) {
    std::vector<DetectionRecord> cat_dets;
    for (const auto& d : dets)
      if (d.category == cat) cat_dets.push_back(d);
    GroundTruthSet cat_gts;
    for (const auto& [image, records] : gts) {
      auto& dst = cat_gts[image];
      for (const auto& r : records)
        if (r.category == cat) dst.push_back(r);
    }
    out.per_class[cat] = average_precision(cat_dets, cat_gts, iou_thr, metric);
  }
  if (!out.per_class.empty()) {
    double sum = 0.0;
    for (const auto& [cat, ap] : out.per_class) sum += ap;
    out.map = sum / static_cast<double>(out.per_class.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Histograms

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;

  Histogram() = default;
  Histogram(double lo_, double hi_, std::size_t bins) : lo(lo_), hi(hi_), counts(bins, 0) {
    if (bins == 0 || !(hi > lo)) throw ConfigError("histogram needs bins >= 1 and hi > lo");
  }

  double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }
  double edge(std::size_t i) const {
    return i == counts.size() ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(counts.size());
  }
  double bin_lo(std::size_t i) const { return edge(i); }
  double bin_hi(std::size_t i) const { return edge(i + 1); }

  // Values outside [lo, hi] fall into the edge bins; hi itself goes into the
  // last bin.
  std::size_t bin_of(double v) const {
    const double pos = (v - lo) / bin_width();
    if (!(pos > 0.0)) return 0;
    std::size_t i = std::min(counts.size() - 1, static_cast<std::size_t>(pos));
    // Settle rounding in the division against the exact edges.
    while (i + 1 < counts.size() && v >= edge(i + 1)) ++i;
    while (i > 0 && v < edge(i)) --i;
    return i;
  }
  void add(double v) { ++counts[bin_of(v)]; }

  // Adds the counts of a histogram with identical binning.
  void merge(const Histogram& other) {
    if (other.lo != lo || other.hi != hi || other.counts.size() != counts.size()) {
      throw ConfigError("histogram merge: binning differs");
    }
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }

  std::string to_csv() const {
    std::string out = "bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < counts.size(); ++i) {
      out += detail::format_double(bin_lo(i)) + "," + detail::format_double(bin_hi(i)) + "," +
             std::to_string(counts[i]) + "\n";
    }
    return out;
  }
};

inline Histogram histogram_from_csv(std::string_view text) {
  const auto lines = detail::split_lines(text);
  if (lines.empty() || lines[0] != "bin_lo,bin_hi,count") throw ParseError("histogram CSV: missing header");
  std::vector<std::array<double, 3>> rows;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    if (detail::is_blank(lines[n])) continue;
    std::array<double, 3> row{};
    std::size_t start = 0;
    for (int k = 0; k < 3; ++k) {
      std::size_t end = lines[n].find(',', start);
      if (end == std::string::npos) end = lines[n].size();
      const auto v = detail::parse_double(std::string_view(lines[n]).substr(start, end - start));
      if (!v) throw ParseError("histogram CSV: line " + std::to_string(n + 1) + " is malformed");
      row[k] = *v;
      start = end + 1;
    }
    rows.push_back(row);
  }
  if (rows.empty()) throw ParseError("histogram CSV: no bins");
  Histogram h(rows.front()[0], rows.back()[1], rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) h.counts[i] = static_cast<std::size_t>(rows[i][2]);
  return h;
}

// Max-IoU of every IoU-positive proposal, binned over [0, 1].
inline Histogram iou_histogram(const std::vector<OrientedBox>& proposals,
                               const std::vector<OrientedBox>& gts, std::size_t bins = 20,
                               double pos_thr = 0.7, double neg_thr = 0.3) {
  Histogram h(0.0, 1.0, bins);
  const IouAssignment a = assign_by_iou_detailed(proposals, gts, pos_thr, neg_thr);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (a.result.labels[i] == Label::kPositive) h.add(a.max_iou[i]);
  }
  return h;
}

struct TargetHistograms {
  Histogram dw;
  Histogram dh;
  double mean_dw = 0.0;
  double mean_dh = 0.0;
  std::size_t samples = 0;
};

// dw = log(w_g / w_p) and dh = log(h_g / h_p) of every IoU-positive
// proposal against its matched gt, binned over [-range, range].
inline TargetHistograms target_histogram(const std::vector<OrientedBox>& proposals,
                                         const std::vector<OrientedBox>& gts, std::size_t bins = 20,
                                         double range = 1.0, double pos_thr = 0.7,
                                         double neg_thr = 0.3) {
  TargetHistograms out{Histogram(-range, range, bins), Histogram(-range, range, bins)};
  const AssignmentResult a = assign_by_iou(proposals, gts, pos_thr, neg_thr);
  double sw = 0.0, sh = 0.0;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (a.labels[i] != Label::kPositive) continue;
    const RefineDeltas d = encode_refine(proposals[i], gts[*a.matched_gt[i]]);
    out.dw.add(d.dw);
    out.dh.add(d.dh);
    sw += d.dw;
    sh += d.dh;
    ++out.samples;
  }
  if (out.samples) {
    out.mean_dw = sw / static_cast<double>(out.samples);
    out.mean_dh = sh / static_cast<double>(out.samples);
  }
  return out;
}

}  // namespace obbkit
