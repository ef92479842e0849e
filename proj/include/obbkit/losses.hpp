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
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "obbkit/assignment.hpp"
#include "obbkit/encoding.hpp"
#include "obbkit/errors.hpp"

namespace obbkit {

struct LossConfig {
  double lambda = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double smooth_l1_beta = 1.0;

  void validate() const {
    if (!(lambda > 0.0 && focal_gamma > 0.0 && focal_alpha > 0.0 && smooth_l1_beta > 0.0)) {
      throw ConfigError("loss config: lambda, gamma, alpha and beta must all be > 0");
    }
  }
};

inline constexpr double kProbEps = 1e-6;

struct ValueGrad {
  double value = 0.0;
  double grad = 0.0;
};

// Binary focal loss on a probability, with d/dp. p is clamped to
// [eps, 1 - eps]; the gradient is zero where the clamp is active.
inline ValueGrad focal_loss(double p, int y, double gamma = 2.0, double alpha = 0.25) {
  const double q = std::clamp(p, kProbEps, 1.0 - kProbEps);
  const bool clamped = q != p;
  ValueGrad out;
  if (y == 1) {
    const double m = 1.0 - q;
    out.value = -alpha * std::pow(m, gamma) * std::log(q);
    // d/dq [-a m^g log q] = a g m^(g-1) log q - a m^g / q
    out.grad = alpha * gamma * std::pow(m, gamma - 1.0) * std::log(q) -
               alpha * std::pow(m, gamma) / q;
  } else {
    const double m = 1.0 - q;
    out.value = -(1.0 - alpha) * std::pow(q, gamma) * std::log(m);
    out.grad = -(1.0 - alpha) * gamma * std::pow(q, gamma - 1.0) * std::log(m) +
               (1.0 - alpha) * std::pow(q, gamma) / m;
  }
  if (clamped) out.grad = 0.0;
  return out;
}

// Smooth L1 on x - t, with d/dx.
inline ValueGrad smooth_l1(double x, double t, double beta = 1.0) {
  const double d = x - t;
  const double ad = std::abs(d);
  if (ad < beta) return {d * d / (2.0 * beta), d / beta};
  return {ad - beta / 2.0, d > 0.0 ? 1.0 : -1.0};
}

// Dense coarse-head outputs for one level, row-major over the grid.
struct PredictionMaps {
  FeatureGridSpec grid;
  std::vector<double> scores;
  std::vector<DistanceVector> distances;  // normalised
  std::vector<double> angles;

  void validate() const {
    const std::size_t n = grid.size();
    if (scores.size() != n || distances.size() != n || angles.size() != n) {
      throw ShapeError("prediction maps for level " + std::to_string(grid.level) +
                       " do not match its " + std::to_string(grid.height) + "x" +
                       std::to_string(grid.width) + " grid");
    }
  }
};

// Per-point regression targets for one level; set at positive points.
using LevelTargets = std::vector<std::optional<DistanceTarget>>;

struct LossBreakdown {
  double ctr = 0.0;
  double dist = 0.0;
  double angle = 0.0;
  double total = 0.0;
  std::size_t n_points = 0;
  std::size_t n_pos = 0;
};

// Gradients of LossBreakdown::total with respect to each prediction.
struct LossGradients {
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<DistanceVector>> distances;
  std::vector<std::vector<double>> angles;
};

// total = lambda/N * sum focal(c, c*) + 1/Npos * sum_pos smoothL1(t, t*)
//         + 1/Npos * sum_pos smoothL1(theta, theta*)
//
// Sums run level by level in row-major order. Ignore-labelled points are
// left out of both the focal sum and N. With no positives the regression
// terms are zero.
inline LossBreakdown clm_loss(const std::vector<PredictionMaps>& preds,
                              const std::vector<AssignmentResult>& assign,
                              const std::vector<LevelTargets>& targets, const LossConfig& cfg,
                              LossGradients* grads = nullptr) {
  cfg.validate();
  if (preds.size() != assign.size() || preds.size() != targets.size()) {
    throw ShapeError("clm_loss: predictions, assignments and targets cover different levels");
  }
  for (std::size_t l = 0; l < preds.size(); ++l) {
    preds[l].validate();
    const std::size_t n = preds[l].grid.size();
    if (assign[l].labels.size() != n || targets[l].size() != n) {
      throw ShapeError("clm_loss: level " + std::to_string(l) + " shape mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (assign[l].labels[i] == Label::kPositive && !targets[l][i]) {
        throw ShapeError("clm_loss: missing target for positive point " + std::to_string(i) +
                         " on level " + std::to_string(l));
      }
    }
  }

  LossBreakdown out;
  double ctr_sum = 0.0, dist_sum = 0.0, angle_sum = 0.0;
  for (std::size_t l = 0; l < preds.size(); ++l) {
    const auto& labels = assign[l].labels;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == Label::kIgnore) continue;
      ++out.n_points;
      const bool pos = labels[i] == Label::kPositive;
      ctr_sum += focal_loss(preds[l].scores[i], pos ? 1 : 0, cfg.focal_gamma, cfg.focal_alpha).value;
      if (!pos) continue;
      ++out.n_pos;
      const auto p = preds[l].distances[i].as_array();
      const auto t = targets[l][i]->distances.as_array();
      for (int k = 0; k < 4; ++k) dist_sum += smooth_l1(p[k], t[k], cfg.smooth_l1_beta).value;
      angle_sum += smooth_l1(preds[l].angles[i], targets[l][i]->angle, cfg.smooth_l1_beta).value;
    }
  }

  const double n = static_cast<double>(out.n_points);
  const double npos = static_cast<double>(out.n_pos);
  out.ctr = out.n_points ? cfg.lambda / n * ctr_sum : 0.0;
  out.dist = out.n_pos ? dist_sum / npos : 0.0;
  out.angle = out.n_pos ? angle_sum / npos : 0.0;
  out.total = out.ctr + out.dist + out.angle;

  if (grads) {
    grads->scores.assign(preds.size(), {});
    grads->distances.assign(preds.size(), {});
    grads->angles.assign(preds.size(), {});
    for (std::size_t l = 0; l < preds.size(); ++l) {
      const std::size_t size = preds[l].grid.size();
      grads->scores[l].assign(size, 0.0);
      grads->distances[l].assign(size, DistanceVector{});
      grads->angles[l].assign(size, 0.0);
      const auto& labels = assign[l].labels;
      for (std::size_t i = 0; i < size; ++i) {
        if (labels[i] == Label::kIgnore) continue;
        const bool pos = labels[i] == Label::kPositive;
        grads->scores[l][i] = cfg.lambda / n *
            focal_loss(preds[l].scores[i], pos ? 1 : 0, cfg.focal_gamma, cfg.focal_alpha).grad;
        if (!pos) continue;
        const auto p = preds[l].distances[i].as_array();
        const auto t = targets[l][i]->distances.as_array();
        std::array<double, 4> g{};
        for (int k = 0; k < 4; ++k) g[k] = smooth_l1(p[k], t[k], cfg.smooth_l1_beta).grad / npos;
        grads->distances[l][i] = DistanceVector::from_array(g);
        grads->angles[l][i] =
            smooth_l1(preds[l].angles[i], targets[l][i]->angle, cfg.smooth_l1_beta).grad / npos;
      }
    }
  }
  return out;
}

}  // namespace obbkit
