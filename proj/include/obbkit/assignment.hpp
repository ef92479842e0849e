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
// Sample assignment for the dense coarse-location head (pyramid level by
// object scale, then central-region membership) and IoU-based labelling of
// candidate boxes for the refinement stage.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "obbkit/errors.hpp"
#include "obbkit/geometry.hpp"

namespace obbkit {

// One pyramid level. Cell (i, j) (column, row) projects to image pixel
// (i * stride + stride / 2, j * stride + stride / 2).
struct FeatureGridSpec {
  int level = 2;
  double stride = 4.0;
  int height = 0;
  int width = 0;
  double normalizer = 16.0;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  std::size_t index(int col, int row) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(col);
  }
  Point point(int col, int row) const {
    return {col * stride + stride / 2.0, row * stride + stride / 2.0};
  }
  Point point(std::size_t flat) const {
    return point(static_cast<int>(flat % static_cast<std::size_t>(width)),
                 static_cast<int>(flat / static_cast<std::size_t>(width)));
  }
};

// Standard level: stride 4 * 2^(level - 2), normalizer 4 * stride, grid sized
// to cover the image.
inline FeatureGridSpec make_level(int level, int image_width, int image_height) {
  if (level < 2 || level > 6) {
    throw ConfigError("pyramid level must be in [2, 6], got " + std::to_string(level));
  }
  if (image_width <= 0 || image_height <= 0) {
    throw ConfigError("image size must be positive");
  }
  FeatureGridSpec g;
  g.level = level;
  g.stride = 4.0 * static_cast<double>(1 << (level - 2));
  g.normalizer = 4.0 * g.stride;
  const auto s = static_cast<int>(g.stride);
  g.width = (image_width + s - 1) / s;
  g.height = (image_height + s - 1) / s;
  return g;
}

inline std::vector<FeatureGridSpec> make_pyramid(int image_width, int image_height) {
  std::vector<FeatureGridSpec> out;
  for (int level = 2; level <= 6; ++level) {
    out.push_back(make_level(level, image_width, image_height));
  }
  return out;
}

struct AssignerConfig {
  double alpha = 8.0;
  double sigma = 0.2;
  double min_size_floor = 0.0;
  double max_size_ceiling = 100000.0;

  void validate() const {
    if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
    if (!(sigma > 0.0 && sigma <= 1.0)) throw ConfigError("sigma must be in (0, 1]");
    if (!(max_size_ceiling > min_size_floor)) {
      throw ConfigError("max_size_ceiling must exceed min_size_floor");
    }
  }
};

enum class Label : std::int8_t { kNegative = 0, kPositive = 1, kIgnore = -1 };

struct AssignmentResult {
  std::vector<Label> labels;
  std::vector<std::optional<std::size_t>> matched_gt;
  // Per-level grouping; a flat candidate list uses level 0.
  int level = 0;
  // positives_per_gt[k] counts points/candidates matched to gts[k].
  std::vector<std::size_t> positives_per_gt;

  std::size_t num_positive() const {
    std::size_t n = 0;
    for (Label l : labels) n += (l == Label::kPositive);
    return n;
  }
  // Ground truths that received no positive sample.
  std::size_t unmatched_gts() const {
    std::size_t n = 0;
    for (std::size_t c : positives_per_gt) n += (c == 0);
    return n;
  }
};

// Scale interval [lower, upper) a level accepts, measured on sqrt(w * h).
struct ScaleRange {
  double lower = 0.0;
  double upper = 0.0;
};

// Interval [alpha * s / sqrt2, sqrt2 * alpha * s), with the first level
// opened down to the floor and the last level up to the ceiling. The lower
// bound is written as alpha * (s / 2) * sqrt2 so that it equals the previous
// level's upper bound bit-for-bit.
inline ScaleRange level_scale_range(const FeatureGridSpec& level, const AssignerConfig& cfg,
                                    bool first, bool last) {
  const double lower = first ? cfg.min_size_floor
                             : cfg.alpha * (level.stride / 2.0) * std::numbers::sqrt2;
  const double upper = last ? cfg.max_size_ceiling
                            : cfg.alpha * level.stride * std::numbers::sqrt2;
  return {lower, upper};
}

inline double box_scale(const OrientedBox& b) { return std::sqrt(b.w * b.h); }

// Returns the position in `levels` whose scale range holds the gt.
inline std::size_t assign_level(const OrientedBox& gt, const AssignerConfig& cfg,
                                const std::vector<FeatureGridSpec>& levels) {
  validate(gt);
  cfg.validate();
  if (levels.empty()) throw ConfigError("assign_level: no pyramid levels");
  const double scale = box_scale(gt);
  if (scale >= cfg.max_size_ceiling) {
    throw UnassignableError("ground truth scale " + std::to_string(scale) +
                            " exceeds the ceiling " + std::to_string(cfg.max_size_ceiling));
  }
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const ScaleRange r = level_scale_range(levels[k], cfg, k == 0, k + 1 == levels.size());
    if (scale >= r.lower && scale < r.upper) return k;
  }
  throw UnassignableError("ground truth scale " + std::to_string(scale) +
                          " is below the floor " + std::to_string(cfg.min_size_floor));
}

// Strict central-region test |x'| < sigma*w/2 and |y'| < sigma*h/2.
inline bool in_central_region(const Point& p, const OrientedBox& gt, double sigma) {
  const Point q = to_local(p, gt);
  return std::abs(q.x) < sigma * gt.w / 2.0 && std::abs(q.y) < sigma * gt.h / 2.0;
}

// Labels every grid point; gts are assumed already routed to this level.
// Overlaps go to the smallest-area gt (then the lower index).
inline AssignmentResult assign_points(const FeatureGridSpec& grid,
                                      const std::vector<OrientedBox>& gts,
                                      const AssignerConfig& cfg) {
  cfg.validate();
  for (const auto& g : gts) validate(g);

  AssignmentResult res;
  res.level = grid.level;
  res.labels.assign(grid.size(), Label::kNegative);
  res.matched_gt.assign(grid.size(), std::nullopt);
  res.positives_per_gt.assign(gts.size(), 0);
  if (gts.empty()) return res;

  for (std::size_t k = 0; k < gts.size(); ++k) {
    const OrientedBox& gt = gts[k];
    // Only visit cells near the gt; the central region sits inside the
    // circumscribed circle.
    const double r = std::hypot(gt.w, gt.h) / 2.0 * cfg.sigma;
    const int c0 = std::max(0, static_cast<int>(std::floor((gt.cx - r) / grid.stride)) - 1);
    const int c1 = std::min(grid.width - 1, static_cast<int>(std::ceil((gt.cx + r) / grid.stride)) + 1);
    const int r0 = std::max(0, static_cast<int>(std::floor((gt.cy - r) / grid.stride)) - 1);
    const int r1 = std::min(grid.height - 1, static_cast<int>(std::ceil((gt.cy + r) / grid.stride)) + 1);
    for (int row = r0; row <= r1; ++row) {
      for (int col = c0; col <= c1; ++col) {
        if (!in_central_region(grid.point(col, row), gt, cfg.sigma)) continue;
        const std::size_t idx = grid.index(col, row);
        auto& cur = res.matched_gt[idx];
        if (!cur || gt.area() < gts[*cur].area()) {
          cur = k;
          res.labels[idx] = Label::kPositive;
        }
      }
    }
  }
  for (const auto& m : res.matched_gt) {
    if (m) ++res.positives_per_gt[*m];
  }
  return res;
}

// Full pyramid assignment: route each gt to its level, then label points.
// matched_gt indices refer to positions in `gts`.
inline std::vector<AssignmentResult> assign_pyramid(const std::vector<FeatureGridSpec>& levels,
                                                    const std::vector<OrientedBox>& gts,
                                                    const AssignerConfig& cfg) {
  std::vector<std::vector<std::size_t>> routed(levels.size());
  for (std::size_t k = 0; k < gts.size(); ++k) {
    routed[assign_level(gts[k], cfg, levels)].push_back(k);
  }
  std::vector<AssignmentResult> out;
  out.reserve(levels.size());
  for (std::size_t l = 0; l < levels.size(); ++l) {
    std::vector<OrientedBox> subset;
    for (std::size_t k : routed[l]) subset.push_back(gts[k]);
    AssignmentResult local = assign_points(levels[l], subset, cfg);
    AssignmentResult global;
    global.level = local.level;
    global.labels = std::move(local.labels);
    global.matched_gt.resize(global.labels.size());
    global.positives_per_gt.assign(gts.size(), 0);
    for (std::size_t i = 0; i < global.labels.size(); ++i) {
      if (local.matched_gt[i]) {
        const std::size_t g = routed[l][*local.matched_gt[i]];
        global.matched_gt[i] = g;
        ++global.positives_per_gt[g];
      }
    }
    out.push_back(std::move(global));
  }
  return out;
}

// Candidate labelling by best IoU: > pos_thr positive, < neg_thr negative,
// otherwise ignore. Also reports the best IoU per candidate.
struct IouAssignment {
  AssignmentResult result;
  std::vector<double> max_iou;
};

inline IouAssignment assign_by_iou_detailed(const std::vector<OrientedBox>& candidates,
                                            const std::vector<OrientedBox>& gts,
                                            double pos_thr = 0.7, double neg_thr = 0.3) {
  if (!(pos_thr > neg_thr) || !(neg_thr >= 0.0) || !(pos_thr <= 1.0)) {
    throw ConfigError("assign_by_iou: need 0 <= neg_thr < pos_thr <= 1");
  }
  IouAssignment out;
  AssignmentResult& res = out.result;
  res.labels.assign(candidates.size(), Label::kNegative);
  res.matched_gt.assign(candidates.size(), std::nullopt);
  res.positives_per_gt.assign(gts.size(), 0);
  out.max_iou.assign(candidates.size(), 0.0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    validate(candidates[i]);
    double best = 0.0;
    std::optional<std::size_t> arg;
    for (std::size_t k = 0; k < gts.size(); ++k) {
      const double iou = rotated_iou(candidates[i], gts[k]);
      if (!arg || iou > best) {
        best = iou;
        arg = k;
      }
    }
    out.max_iou[i] = best;
    if (arg && best > pos_thr) {
      res.labels[i] = Label::kPositive;
      res.matched_gt[i] = arg;
      ++res.positives_per_gt[*arg];
    } else if (arg && best >= neg_thr) {
      res.labels[i] = Label::kIgnore;
    }
  }
  return out;
}

inline AssignmentResult assign_by_iou(const std::vector<OrientedBox>& candidates,
                                      const std::vector<OrientedBox>& gts,
                                      double pos_thr = 0.7, double neg_thr = 0.3) {
  return assign_by_iou_detailed(candidates, gts, pos_thr, neg_thr).result;
}

}  // namespace obbkit
