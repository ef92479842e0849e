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
// Box-guided 3x3 deformable sampling ("AlignConv").
//
// Instead of learning offsets, each output position p samples a regular 3x3
// lattice spread over the oriented box predicted at p: centre, edge midpoints
// and corners. Positions are in feature-grid units, i.e. image pixels divided
// by the level stride; X(x, y) is stored at fm(c, row = y, col = x).
#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "obbkit/assignment.hpp"
#include "obbkit/errors.hpp"
#include "obbkit/geometry.hpp"

namespace obbkit {

inline constexpr int kKernelSize = 3;
inline constexpr int kKernelPoints = 9;

// Kernel element k <-> r = (k % 3 - 1, k / 3 - 1), row-major over (r_y, r_x).
inline Point kernel_offset(int k) {
  return {static_cast<double>(k % kKernelSize - 1), static_cast<double>(k / kKernelSize - 1)};
}

class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int height, int width, double fill = 0.0)
      : channels_(channels), height_(height), width_(width),
        values_(static_cast<std::size_t>(channels) * height * width, fill) {
    if (channels < 0 || height < 0 || width < 0) throw ShapeError("negative feature map extent");
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }

  double& at(int c, int row, int col) { return values_[offset(c, row, col)]; }
  double at(int c, int row, int col) const { return values_[offset(c, row, col)]; }

  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t offset(int c, int row, int col) const {
    return (static_cast<std::size_t>(c) * height_ + row) * width_ + col;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

// Depthwise 3x3 weights: weight(c, k) multiplies channel c at kernel element k.
class KernelWeights {
 public:
  explicit KernelWeights(int channels, double fill = 0.0)
      : channels_(channels), values_(static_cast<std::size_t>(channels) * kKernelPoints, fill) {}

  static KernelWeights uniform(int channels) {
    return KernelWeights(channels, 1.0 / kKernelPoints);
  }
  static KernelWeights center_one_hot(int channels) {
    KernelWeights w(channels);
    for (int c = 0; c < channels; ++c) w.at(c, 4) = 1.0;
    return w;
  }

  int channels() const { return channels_; }
  double& at(int c, int k) { return values_[static_cast<std::size_t>(c) * kKernelPoints + k]; }
  double at(int c, int k) const {
    return values_[static_cast<std::size_t>(c) * kKernelPoints + k];
  }

 private:
  int channels_;
  std::vector<double> values_;
};

// Per-position, per-kernel-element 2-vector offsets, shape (H, W, 9, 2).
class OffsetField {
 public:
  OffsetField(int height, int width)
      : height_(height), width_(width),
        values_(static_cast<std::size_t>(height) * width * kKernelPoints) {}

  int height() const { return height_; }
  int width() const { return width_; }
  Point& at(int row, int col, int k) { return values_[index(row, col, k)]; }
  const Point& at(int row, int col, int k) const { return values_[index(row, col, k)]; }
  const std::vector<Point>& values() const { return values_; }

 private:
  std::size_t index(int row, int col, int k) const {
    return (static_cast<std::size_t>(row) * width_ + col) * kKernelPoints + k;
  }

  int height_;
  int width_;
  std::vector<Point> values_;
};

using SamplingLattice = std::array<Point, kKernelPoints>;

// Lattice points (w/2 * r_x, h/2 * r_y) of the box frame, mapped to the image
// and divided by the stride.
inline SamplingLattice sampling_positions(const OrientedBox& box, const FeatureGridSpec& grid) {
  validate(box);
  SamplingLattice out;
  for (int k = 0; k < kKernelPoints; ++k) {
    const Point r = kernel_offset(k);
    const Point img = from_local({box.w / 2.0 * r.x, box.h / 2.0 * r.y}, box);
    out[k] = {img.x / grid.stride, img.y / grid.stride};
  }
  return out;
}

// o(p, r) = r_box(r) - p - r for every grid position p = (col, row).
// `boxes` is row-major with one box per grid position.
inline OffsetField offset_field(const std::vector<OrientedBox>& boxes,
                                const FeatureGridSpec& grid) {
  if (boxes.size() != grid.size()) {
    throw ShapeError("offset_field: got " + std::to_string(boxes.size()) + " boxes for a " +
                     std::to_string(grid.height) + "x" + std::to_string(grid.width) + " grid");
  }
  OffsetField field(grid.height, grid.width);
  for (int row = 0; row < grid.height; ++row) {
    for (int col = 0; col < grid.width; ++col) {
      const SamplingLattice lattice = sampling_positions(boxes[grid.index(col, row)], grid);
      for (int k = 0; k < kKernelPoints; ++k) {
        const Point r = kernel_offset(k);
        field.at(row, col, k) = {lattice[k].x - col - r.x, lattice[k].y - row - r.y};
      }
    }
  }
  return field;
}

// Bilinear read of channel c at fractional (x, y); taps outside the map read
// as zero.
inline double bilinear_sample(const FeatureMap& fm, int c, const Point& pos) {
  const double x0f = std::floor(pos.x);
  const double y0f = std::floor(pos.y);
  const double fx = pos.x - x0f;
  const double fy = pos.y - y0f;
  const int x0 = static_cast<int>(x0f);
  const int y0 = static_cast<int>(y0f);

  const auto tap = [&](int row, int col) {
    if (row < 0 || row >= fm.height() || col < 0 || col >= fm.width()) return 0.0;
    return fm.at(c, row, col);
  };
  double v = 0.0;
  if ((1.0 - fx) * (1.0 - fy) != 0.0) v += (1.0 - fx) * (1.0 - fy) * tap(y0, x0);
  if (fx * (1.0 - fy) != 0.0) v += fx * (1.0 - fy) * tap(y0, x0 + 1);
  if ((1.0 - fx) * fy != 0.0) v += (1.0 - fx) * fy * tap(y0 + 1, x0);
  if (fx * fy != 0.0) v += fx * fy * tap(y0 + 1, x0 + 1);
  return v;
}

inline std::vector<double> bilinear_sample(const FeatureMap& fm, int c,
                                           const std::vector<Point>& positions) {
  std::vector<double> out;
  out.reserve(positions.size());
  for (const Point& p : positions) out.push_back(bilinear_sample(fm, c, p));
  return out;
}

// Y_c(p) = sum_r W_c(r) * X_c(p + r + o(p, r)).
inline FeatureMap align_forward(const FeatureMap& fm, const KernelWeights& weights,
                                const std::vector<OrientedBox>& boxes,
                                const FeatureGridSpec& grid) {
  if (fm.height() != grid.height || fm.width() != grid.width) {
    throw ShapeError("align_forward: feature map and grid dimensions differ");
  }
  if (weights.channels() != fm.channels()) {
    throw ShapeError("align_forward: kernel has " + std::to_string(weights.channels()) +
                     " channels, feature map has " + std::to_string(fm.channels()));
  }
  const OffsetField field = offset_field(boxes, grid);
  FeatureMap out(fm.channels(), fm.height(), fm.width());
  for (int c = 0; c < fm.channels(); ++c) {
    for (int row = 0; row < grid.height; ++row) {
      for (int col = 0; col < grid.width; ++col) {
        double acc = 0.0;
        for (int k = 0; k < kKernelPoints; ++k) {
          const Point r = kernel_offset(k);
          const Point& o = field.at(row, col, k);
          acc += weights.at(c, k) * bilinear_sample(fm, c, {col + r.x + o.x, row + r.y + o.y});
        }
        out.at(c, row, col) = acc;
      }
    }
  }
  return out;
}

}  // namespace obbkit
