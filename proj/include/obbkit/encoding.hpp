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
// Regression target coding.
//
//  * Coarse (distance/angle) coder: a point inside a gt is described by its
//    distances (l, t, r, b) to the four sides measured in the gt frame,
//    log-normalised by the level normaliser z, plus the gt angle.
//  * Refinement coder: rotated-frame deltas from a proposal to a gt.
#pragma once

#include <array>
#include <cmath>

#include "obbkit/assignment.hpp"
#include "obbkit/errors.hpp"
#include "obbkit/geometry.hpp"

namespace obbkit {

struct DistanceVector {
  double l = 0.0;
  double t = 0.0;
  double r = 0.0;
  double b = 0.0;

  std::array<double, 4> as_array() const { return {l, t, r, b}; }
  static DistanceVector from_array(const std::array<double, 4>& a) {
    return {a[0], a[1], a[2], a[3]};
  }
  friend bool operator==(const DistanceVector&, const DistanceVector&) = default;
};

// Raw side distances of `p` to the sides of `gt` (may be negative outside).
inline DistanceVector raw_distances(const Point& p, const OrientedBox& gt) {
  const Point q = to_local(p, gt);
  return {gt.w / 2.0 + q.x, gt.h / 2.0 + q.y, gt.w / 2.0 - q.x, gt.h / 2.0 - q.y};
}

inline DistanceVector normalize_distances(const DistanceVector& raw, double z) {
  return {std::log(raw.l / z), std::log(raw.t / z), std::log(raw.r / z), std::log(raw.b / z)};
}

inline DistanceVector denormalize_distances(const DistanceVector& n, double z) {
  return {z * std::exp(n.l), z * std::exp(n.t), z * std::exp(n.r), z * std::exp(n.b)};
}

struct DistanceTarget {
  DistanceVector distances;  // normalised
  double angle = 0.0;
};

inline DistanceTarget encode_distances(const Point& p, const OrientedBox& gt,
                                       const FeatureGridSpec& grid) {
  validate(gt);
  const DistanceVector raw = raw_distances(p, gt);
  if (!(raw.l > 0.0 && raw.t > 0.0 && raw.r > 0.0 && raw.b > 0.0)) {
    throw PointOutsideBoxError("encode_distances: point (" + std::to_string(p.x) + ", " +
                               std::to_string(p.y) + ") is not strictly inside " +
                               to_string(gt));
  }
  return {normalize_distances(raw, grid.normalizer), gt.theta};
}

// Inverse of encode_distances.
inline OrientedBox decode_box(const Point& p, const DistanceVector& normalized, double theta,
                              const FeatureGridSpec& grid) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(normalized.l) ||
      !std::isfinite(normalized.t) || !std::isfinite(normalized.r) ||
      !std::isfinite(normalized.b) || !std::isfinite(theta)) {
    throw InvalidBoxError("decode_box: non-finite input");
  }
  const DistanceVector raw = denormalize_distances(normalized, grid.normalizer);
  const double w = raw.l + raw.r;
  const double h = raw.t + raw.b;
  // p sits at local (x', y'); the centre is p - R^T (x', y').
  const double lx = (raw.l - raw.r) / 2.0;
  const double ly = (raw.t - raw.b) / 2.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const OrientedBox box{p.x - (c * lx + s * ly), p.y - (-s * lx + c * ly), w, h, theta};
  return canonicalize(box);
}

struct RefineDeltas {
  double dx = 0.0;
  double dy = 0.0;
  double dw = 0.0;
  double dh = 0.0;
  double dtheta = 0.0;

  friend bool operator==(const RefineDeltas&, const RefineDeltas&) = default;
};

// Wraps an angle into (-pi/2, pi/2].
inline double wrap_half_turn(double a) {
  double r = std::remainder(a, kPi);  // [-pi/2, pi/2]
  if (r <= -kHalfPi) r += kPi;
  return r;
}

inline RefineDeltas encode_refine(const OrientedBox& proposal, const OrientedBox& gt) {
  validate(proposal);
  validate(gt);
  const Point q = to_local(gt.center(), proposal);
  return {q.x / proposal.w, q.y / proposal.h, std::log(gt.w / proposal.w),
          std::log(gt.h / proposal.h), wrap_half_turn(gt.theta - proposal.theta)};
}

inline OrientedBox decode_refine(const OrientedBox& proposal, const RefineDeltas& d) {
  validate(proposal);
  if (!std::isfinite(d.dx) || !std::isfinite(d.dy) || !std::isfinite(d.dw) ||
      !std::isfinite(d.dh) || !std::isfinite(d.dtheta)) {
    throw InvalidBoxError("decode_refine: non-finite deltas");
  }
  const Point c = from_local({d.dx * proposal.w, d.dy * proposal.h}, proposal);
  return canonicalize({c.x, c.y, proposal.w * std::exp(d.dw), proposal.h * std::exp(d.dh),
                       proposal.theta + d.dtheta});
}

}  // namespace obbkit
