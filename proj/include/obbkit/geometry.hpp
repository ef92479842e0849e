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
// Oriented-box representation, frame transforms and rotated IoU.
//
// Image convention: x to the right, y downward. A box (cx, cy, w, h, theta)
// owns a local frame obtained by
//
//     (x', y') = R(theta) * (x - cx, y - cy),  R = [[cos, -sin], [sin, cos]]
//
// so the box is {|x'| <= w/2, |y'| <= h/2} and local points map back to the
// image through R(theta)^T.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "obbkit/errors.hpp"

namespace obbkit {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kHalfPi = std::numbers::pi / 2.0;
inline constexpr double kQuarterPi = std::numbers::pi / 4.0;

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct OrientedBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 1.0;
  double h = 1.0;
  double theta = 0.0;

  Point center() const { return {cx, cy}; }
  double area() const { return w * h; }

  friend bool operator==(const OrientedBox&, const OrientedBox&) = default;
};

inline std::string to_string(const OrientedBox& b) {
  std::ostringstream os;
  os.precision(17);
  os << "(" << b.cx << ", " << b.cy << ", " << b.w << ", " << b.h << ", "
     << b.theta << ")";
  return os.str();
}

inline bool is_valid(const OrientedBox& b) {
  return std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.w) &&
         std::isfinite(b.h) && std::isfinite(b.theta) && b.w > 0.0 &&
         b.h > 0.0;
}

inline void validate(const OrientedBox& b) {
  if (!is_valid(b)) {
    throw InvalidBoxError("invalid oriented box " + to_string(b) +
                          ": need finite fields and w, h > 0");
  }
}

// Maps theta into [-pi/4, pi/4), swapping w and h on every odd number of
// quarter-turns. The vertex set is unchanged.
inline OrientedBox canonicalize(const OrientedBox& box) {
  validate(box);
  OrientedBox out = box;
  if (out.theta >= -kQuarterPi && out.theta < kQuarterPi) return out;

  auto k = static_cast<std::int64_t>(std::floor((out.theta + kQuarterPi) / kHalfPi));
  double theta = out.theta - static_cast<double>(k) * kHalfPi;
  // floor() on a rounded quotient can land one step off at the boundaries.
  while (theta >= kQuarterPi) {
    theta -= kHalfPi;
    ++k;
  }
  while (theta < -kQuarterPi) {
    theta += kHalfPi;
    --k;
  }
  out.theta = theta;
  if (k % 2 != 0) std::swap(out.w, out.h);
  return out;
}

inline Point to_local(const Point& p, const OrientedBox& box) {
  validate(box);
  const double c = std::cos(box.theta);
  const double s = std::sin(box.theta);
  const double dx = p.x - box.cx;
  const double dy = p.y - box.cy;
  return {c * dx - s * dy, s * dx + c * dy};
}

// Inverse of to_local.
inline Point from_local(const Point& q, const OrientedBox& box) {
  validate(box);
  const double c = std::cos(box.theta);
  const double s = std::sin(box.theta);
  return {box.cx + c * q.x + s * q.y, box.cy - s * q.x + c * q.y};
}

// Closed-box membership with an absolute slack in local coordinates.
inline bool contains(const OrientedBox& box, const Point& p, double tol = 0.0) {
  const Point q = to_local(p, box);
  return std::abs(q.x) <= box.w / 2.0 + tol && std::abs(q.y) <= box.h / 2.0 + tol;
}

// Four vertices, counter-clockwise in the math orientation (positive
// shoelace area).
inline std::array<Point, 4> corners(const OrientedBox& box) {
  validate(box);
  const double hw = box.w / 2.0;
  const double hh = box.h / 2.0;
  return {from_local({-hw, -hh}, box), from_local({hw, -hh}, box),
          from_local({hw, hh}, box), from_local({-hw, hh}, box)};
}

inline double polygon_area(const std::vector<Point>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % n];
    acc += a.x * b.y - a.y * b.x;
  }
  return acc / 2.0;
}

namespace detail {

inline double cross(const Point& a, const Point& b, const Point& p) {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

inline Point segment_line_intersection(const Point& p, const Point& q,
                                       const Point& a, const Point& b) {
  const double dp = cross(a, b, p);
  const double dq = cross(a, b, q);
  const double t = dp / (dp - dq);
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

}  // namespace detail

// Sutherland-Hodgman: clips `subject` against the convex counter-clockwise
// polygon `clip`.
inline std::vector<Point> clip_convex(std::vector<Point> subject,
                                      const std::vector<Point>& clip) {
  const std::size_t m = clip.size();
  std::vector<Point> next;
  for (std::size_t e = 0; e < m && !subject.empty(); ++e) {
    const Point& a = clip[e];
    const Point& b = clip[(e + 1) % m];
    next.clear();
    const std::size_t n = subject.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point& cur = subject[i];
      const Point& prev = subject[(i + n - 1) % n];
      const bool cur_in = detail::cross(a, b, cur) >= 0.0;
      const bool prev_in = detail::cross(a, b, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) next.push_back(detail::segment_line_intersection(prev, cur, a, b));
        next.push_back(cur);
      } else if (prev_in) {
        next.push_back(detail::segment_line_intersection(prev, cur, a, b));
      }
    }
    subject.swap(next);
  }
  return subject;
}

inline constexpr double kDegenerateArea = 1e-12;

// A validated box with its corners and bounds cached, for repeated IoU
// queries (NMS, IoU matrices).
struct PreparedBox {
  OrientedBox box;
  std::array<Point, 4> pts;
  double xmin, ymin, xmax, ymax;

  explicit PreparedBox(const OrientedBox& b) : box(b), pts(corners(b)) {
    xmin = ymin = INFINITY;
    xmax = ymax = -INFINITY;
    for (const Point& p : pts) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
  }
};

namespace detail {

// Same algorithm as clip_convex, specialised to two quadrilaterals with
// fixed-size buffers (a convex quad clipped by four half-planes has at most
// eight vertices).
inline double quad_intersection_area(const std::array<Point, 4>& subject,
                                     const std::array<Point, 4>& clip) {
  std::array<Point, 12> buf_a{}, buf_b{};
  std::copy(subject.begin(), subject.end(), buf_a.begin());
  std::size_t n = 4;
  Point* cur_poly = buf_a.data();
  Point* next_poly = buf_b.data();
  for (std::size_t e = 0; e < 4 && n > 0; ++e) {
    const Point& a = clip[e];
    const Point& b = clip[(e + 1) % 4];
    std::size_t m = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Point& cur = cur_poly[i];
      const Point& prev = cur_poly[(i + n - 1) % n];
      const bool cur_in = cross(a, b, cur) >= 0.0;
      const bool prev_in = cross(a, b, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) next_poly[m++] = segment_line_intersection(prev, cur, a, b);
        next_poly[m++] = cur;
      } else if (prev_in) {
        next_poly[m++] = segment_line_intersection(prev, cur, a, b);
      }
    }
    std::swap(cur_poly, next_poly);
    n = m;
  }
  if (n < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = cur_poly[i];
    const Point& q = cur_poly[(i + 1) % n];
    acc += p.x * q.y - p.y * q.x;
  }
  return acc / 2.0;
}

}  // namespace detail

inline double intersection_area(const PreparedBox& a, const PreparedBox& b) {
  if (a.xmax <= b.xmin || b.xmax <= a.xmin || a.ymax <= b.ymin || b.ymax <= a.ymin) return 0.0;
  const double area = detail::quad_intersection_area(a.pts, b.pts);
  return area < kDegenerateArea ? 0.0 : area;
}

// Area of the intersection of two oriented boxes.
inline double intersection_area(const OrientedBox& a, const OrientedBox& b) {
  return intersection_area(PreparedBox(a), PreparedBox(b));
}

// Rotated IoU via polygon clipping. The arguments are put in a fixed order
// first, so the result is bit-for-bit symmetric.
inline double rotated_iou(const PreparedBox& a, const PreparedBox& b) {
  const auto key = [](const OrientedBox& x) {
    return std::tie(x.cx, x.cy, x.w, x.h, x.theta);
  };
  const bool swap = key(b.box) < key(a.box);
  const PreparedBox& first = swap ? b : a;
  const PreparedBox& second = swap ? a : b;

  const double inter = intersection_area(first, second);
  if (inter <= 0.0) return 0.0;
  const double uni = first.box.area() + second.box.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

inline double rotated_iou(const OrientedBox& a, const OrientedBox& b) {
  return rotated_iou(PreparedBox(a), PreparedBox(b));
}

// Monte-Carlo IoU estimate over the bounding rectangle of both boxes. Used as
// an independent check of rotated_iou.
inline double iou_oracle_mc(const OrientedBox& a, const OrientedBox& b,
                            std::uint64_t samples, std::uint64_t seed) {
  validate(a);
  validate(b);
  if (samples == 0) throw ConfigError("iou_oracle_mc: samples must be >= 1");

  double xmin = INFINITY, ymin = INFINITY, xmax = -INFINITY, ymax = -INFINITY;
  for (const auto& box : {a, b}) {
    for (const Point& p : corners(box)) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
  }

  const double ca = std::cos(a.theta), sa = std::sin(a.theta);
  const double cb = std::cos(b.theta), sb = std::sin(b.theta);
  const auto inside = [](double dx, double dy, double c, double s,
                         const OrientedBox& box) {
    return std::abs(c * dx - s * dy) <= box.w / 2.0 &&
           std::abs(s * dx + c * dy) <= box.h / 2.0;
  };

  std::mt19937_64 rng(seed);
  const auto unit = [&rng] {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
  };
  std::uint64_t in_a = 0, in_b = 0, in_both = 0;
  for (std::uint64_t i = 0; i < samples; ++i) {
    const double x = xmin + (xmax - xmin) * unit();
    const double y = ymin + (ymax - ymin) * unit();
    const bool ia = inside(x - a.cx, y - a.cy, ca, sa, a);
    const bool ib = inside(x - b.cx, y - b.cy, cb, sb, b);
    in_a += ia;
    in_b += ib;
    in_both += (ia && ib);
  }
  const std::uint64_t uni = in_a + in_b - in_both;
  return uni == 0 ? 0.0 : static_cast<double>(in_both) / static_cast<double>(uni);
}

// Pairwise IoU matrix, row-major (a.size() x b.size()).
inline std::vector<double> iou_matrix(const std::vector<OrientedBox>& a,
                                      const std::vector<OrientedBox>& b) {
  std::vector<PreparedBox> pb;
  pb.reserve(b.size());
  for (const auto& x : b) pb.emplace_back(x);
  std::vector<double> out(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const PreparedBox pa(a[i]);
    for (std::size_t j = 0; j < b.size(); ++j) out[i * b.size() + j] = rotated_iou(pa, pb[j]);
  }
  return out;
}

}  // namespace obbkit
