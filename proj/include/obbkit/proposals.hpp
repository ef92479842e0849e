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
// Proposal generation: decode coarse boxes, refine them, fuse coarse and fine
// scores, then pooled rotated NMS.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "obbkit/encoding.hpp"
#include "obbkit/errors.hpp"
#include "obbkit/geometry.hpp"
#include "obbkit/losses.hpp"

namespace obbkit {

// Indices sorted by descending score; equal scores keep ascending index.
inline std::vector<std::size_t> order_by_score(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

// Greedy rotated NMS. Returns kept indices in score-descending order.
inline std::vector<std::size_t> rotated_nms(const std::vector<OrientedBox>& boxes,
                                            const std::vector<double>& scores, double iou_thr) {
  if (boxes.size() != scores.size()) {
    throw ShapeError("rotated_nms: " + std::to_string(boxes.size()) + " boxes but " +
                     std::to_string(scores.size()) + " scores");
  }
  if (!(iou_thr > 0.0 && iou_thr <= 1.0)) throw ConfigError("rotated_nms: iou_thr must be in (0, 1]");
  std::vector<PreparedBox> prepared;
  prepared.reserve(boxes.size());
  for (const auto& b : boxes) prepared.emplace_back(b);

  const std::vector<std::size_t> order = order_by_score(scores);
  std::vector<char> suppressed(boxes.size(), 0);
  std::vector<std::size_t> keep;
  for (std::size_t a = 0; a < order.size(); ++a) {
    const std::size_t i = order[a];
    if (suppressed[i]) continue;
    keep.push_back(i);
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      const std::size_t j = order[b];
      if (!suppressed[j] && rotated_iou(prepared[i], prepared[j]) > iou_thr) suppressed[j] = 1;
    }
  }
  return keep;
}

inline std::vector<double> fuse_scores(const std::vector<double>& coarse,
                                       const std::vector<double>& fine) {
  if (coarse.size() != fine.size()) throw ShapeError("fuse_scores: length mismatch");
  std::vector<double> out(coarse.size());
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    const double c = coarse[i], f = fine[i];
    if (!(c >= 0.0 && c <= 1.0 && f >= 0.0 && f <= 1.0)) {
      throw ConfigError("fuse_scores: scores must lie in [0, 1] (index " + std::to_string(i) + ")");
    }
    out[i] = (c + f) / 2.0;
  }
  return out;
}

// Coarse predictions plus the refinement head's outputs for one level.
struct LevelOutputs {
  PredictionMaps coarse;
  std::vector<RefineDeltas> deltas;
  std::vector<double> fine_scores;

  void validate() const {
    coarse.validate();
    if (deltas.size() != coarse.grid.size() || fine_scores.size() != coarse.grid.size()) {
      throw ShapeError("refinement outputs for level " + std::to_string(coarse.grid.level) +
                       " do not match its grid");
    }
  }
};

struct ProposalConfig {
  std::size_t pre_nms_top_k = 2000;  // per level
  std::size_t post_nms_top_n = 2000;
  double nms_thr = 0.8;
  double score_floor = 0.0;  // fused scores below the floor are dropped
};

struct Proposal {
  OrientedBox box;
  double score = 0.0;
  int level = 0;
  std::size_t point = 0;  // flat grid index on its level
};

inline std::vector<Proposal> generate_proposals(const std::vector<LevelOutputs>& levels,
                                                const ProposalConfig& cfg = {}) {
  std::vector<Proposal> pooled;
  for (const LevelOutputs& lv : levels) {
    lv.validate();
    const FeatureGridSpec& grid = lv.coarse.grid;
    const std::vector<double> fused = fuse_scores(lv.coarse.scores, lv.fine_scores);

    std::vector<std::size_t> order = order_by_score(fused);
    std::vector<Proposal> level_props;
    for (std::size_t i : order) {
      if (level_props.size() >= cfg.pre_nms_top_k) break;
      if (fused[i] < cfg.score_floor) continue;
      const OrientedBox coarse =
          decode_box(grid.point(i), lv.coarse.distances[i], lv.coarse.angles[i], grid);
      level_props.push_back({decode_refine(coarse, lv.deltas[i]), fused[i], grid.level, i});
    }
    pooled.insert(pooled.end(), level_props.begin(), level_props.end());
  }

  // Fixed total order independent of the order levels were passed in.
  std::sort(pooled.begin(), pooled.end(), [](const Proposal& a, const Proposal& b) {
    return std::make_tuple(-a.score, a.level, a.point) <
           std::make_tuple(-b.score, b.level, b.point);
  });

  std::vector<OrientedBox> boxes;
  std::vector<double> scores;
  boxes.reserve(pooled.size());
  scores.reserve(pooled.size());
  for (const auto& p : pooled) {
    boxes.push_back(p.box);
    scores.push_back(p.score);
  }
  const std::vector<std::size_t> keep = rotated_nms(boxes, scores, cfg.nms_thr);

  std::vector<Proposal> out;
  for (std::size_t i : keep) {
    if (out.size() >= cfg.post_nms_top_n) break;
    out.push_back(pooled[i]);
  }
  return out;
}

}  // namespace obbkit
