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
// Synthetic scenes: random ground truths plus the prediction maps an ideal
// network would emit for them, optionally perturbed by Gaussian noise.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "obbkit/assignment.hpp"
#include "obbkit/encoding.hpp"
#include "obbkit/errors.hpp"
#include "obbkit/geometry.hpp"
#include "obbkit/losses.hpp"
#include "obbkit/proposals.hpp"

namespace obbkit {

// mt19937_64 with hand-rolled uniform/normal transforms so that streams are
// identical across standard library implementations.
class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(uniform() * static_cast<double>(hi - lo + 1));
  }

  // Box-Muller; the second variate of each pair is discarded.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

struct SceneConfig {
  int image_width = 256;
  int image_height = 256;
  int min_gts = 5;
  int max_gts = 5;
  double min_scale = 24.0;   // sqrt(w * h), pixels
  double max_scale = 160.0;
  double max_aspect = 3.0;   // w / h upper bound (log-uniform in [1, max])
  double noise = 0.0;        // std-dev on every regression channel
  double positive_score = 0.9;
  double negative_score = 0.05;
  int max_attempts = 10000;  // rejection-sampling budget per gt
  AssignerConfig assigner;

  void validate() const {
    if (image_width <= 0 || image_height <= 0) throw ConfigError("scene: image size must be positive");
    if (min_gts < 0 || max_gts < min_gts) throw ConfigError("scene: need 0 <= min_gts <= max_gts");
    if (!(min_scale > 0.0 && max_scale >= min_scale)) throw ConfigError("scene: bad scale range");
    if (!(max_aspect >= 1.0)) throw ConfigError("scene: max_aspect must be >= 1");
    if (!(noise >= 0.0)) throw ConfigError("scene: noise must be >= 0");
    if (!(positive_score >= 0.0 && positive_score <= 1.0 && negative_score >= 0.0 &&
          negative_score <= 1.0)) {
      throw ConfigError("scene: scores must be probabilities");
    }
    if (max_attempts <= 0) throw ConfigError("scene: max_attempts must be positive");
    assigner.validate();
  }
};

struct Scene {
  std::vector<OrientedBox> gts;
  std::vector<FeatureGridSpec> pyramid;
  std::vector<AssignmentResult> assignments;
  std::vector<LevelTargets> targets;
  std::vector<LevelOutputs> outputs;
};

namespace detail {

inline OrientedBox sample_gt(SceneRng& rng, const SceneConfig& cfg) {
  const double scale = std::exp(rng.uniform(std::log(cfg.min_scale), std::log(cfg.max_scale)));
  const double aspect = std::exp(rng.uniform(0.0, std::log(cfg.max_aspect)));
  const double w = scale * std::sqrt(aspect);
  const double h = scale / std::sqrt(aspect);
  const double theta = rng.uniform(-kQuarterPi, kQuarterPi);
  const double radius = std::hypot(w, h) / 2.0;
  const double cx = rng.uniform(radius, std::max(radius, cfg.image_width - radius));
  const double cy = rng.uniform(radius, std::max(radius, cfg.image_height - radius));
  return {cx, cy, w, h, theta};
}

}  // namespace detail

// Ground truths are pairwise disjoint, fit inside the image and each own at
// least one positive point on its level.
inline Scene simulate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  SceneRng rng(seed);
  Scene scene;
  scene.pyramid = make_pyramid(cfg.image_width, cfg.image_height);

  const int count = rng.uniform_int(cfg.min_gts, cfg.max_gts);
  for (int g = 0; g < count; ++g) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      const OrientedBox cand = detail::sample_gt(rng, cfg);
      const double extent = std::hypot(cand.w, cand.h);
      if (extent > cfg.image_width || extent > cfg.image_height) continue;
      bool clear = true;
      for (const auto& other : scene.gts) {
        if (intersection_area(cand, other) > 0.0) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      const std::size_t lvl = assign_level(cand, cfg.assigner, scene.pyramid);
      if (assign_points(scene.pyramid[lvl], {cand}, cfg.assigner).num_positive() == 0) continue;
      scene.gts.push_back(cand);
      placed = true;
    }
    if (!placed) {
      throw ConfigError("simulate_scene: could not place ground truth " + std::to_string(g) +
                        " within " + std::to_string(cfg.max_attempts) + " attempts");
    }
  }

  scene.assignments = assign_pyramid(scene.pyramid, scene.gts, cfg.assigner);
  const auto noisy = [&](double v) { return cfg.noise > 0.0 ? v + cfg.noise * rng.normal() : v; };

  for (std::size_t l = 0; l < scene.pyramid.size(); ++l) {
    const FeatureGridSpec& grid = scene.pyramid[l];
    const AssignmentResult& assign = scene.assignments[l];
    LevelTargets targets(grid.size());
    LevelOutputs out;
    out.coarse.grid = grid;
    out.coarse.scores.resize(grid.size());
    out.coarse.distances.resize(grid.size());
    out.coarse.angles.resize(grid.size());
    out.deltas.resize(grid.size());
    out.fine_scores.resize(grid.size());

    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Point p = grid.point(i);
      const bool pos = assign.labels[i] == Label::kPositive;
      DistanceVector dist{};
      double angle = 0.0;
      if (pos) {
        targets[i] = encode_distances(p, scene.gts[*assign.matched_gt[i]], grid);
        dist = targets[i]->distances;
        angle = targets[i]->angle;
      }
      dist = {noisy(dist.l), noisy(dist.t), noisy(dist.r), noisy(dist.b)};
      angle = noisy(angle);
      out.coarse.scores[i] = pos ? cfg.positive_score : cfg.negative_score;
      out.coarse.distances[i] = dist;
      out.coarse.angles[i] = angle;

      RefineDeltas d{};
      if (pos) {
        const OrientedBox coarse = decode_box(p, dist, angle, grid);
        d = encode_refine(coarse, scene.gts[*assign.matched_gt[i]]);
      }
      out.deltas[i] = {noisy(d.dx), noisy(d.dy), noisy(d.dw), noisy(d.dh), noisy(d.dtheta)};
      out.fine_scores[i] = pos ? cfg.positive_score : cfg.negative_score;
    }
    scene.targets.push_back(std::move(targets));
    scene.outputs.push_back(std::move(out));
  }
  return scene;
}

}  // namespace obbkit
