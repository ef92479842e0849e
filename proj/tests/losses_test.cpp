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
#include "obbkit/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

namespace obbkit {
namespace {

using testing::Rng;

TEST(FocalLoss, Examples) {
  EXPECT_LT(focal_loss(1.0 - 1e-9, 1).value, 1e-15);
  EXPECT_NEAR(focal_loss(0.5, 1, 2.0, 0.25).value, 0.25 * 0.25 * std::log(2.0), 1e-15);
  EXPECT_NEAR(focal_loss(0.5, 1, 2.0, 0.25).value, 0.04332, 1e-5);
  EXPECT_NEAR(focal_loss(0.3, 0, 2.0, 0.25).value, -0.75 * 0.09 * std::log(0.7), 1e-15);
}

TEST(FocalLoss, ClampsOutOfRange) {
  const ValueGrad lo = focal_loss(0.0, 1);
  EXPECT_TRUE(std::isfinite(lo.value));
  EXPECT_NEAR(lo.value, focal_loss(kProbEps, 1).value, 1e-12);
  EXPECT_EQ(lo.grad, 0.0);
  EXPECT_TRUE(std::isfinite(focal_loss(1.5, 0).value));
}

TEST(FocalLoss, GradientMatchesFiniteDifference) {
  Rng rng(51);
  for (int i = 0; i < 100; ++i) {
    const double p = rng.uniform(0.01, 0.99);
    const int y = rng.uniform_int(0, 1);
    const double fd = testing::central_difference([&](double q) { return focal_loss(q, y).value; }, p);
    EXPECT_TRUE(testing::rel_close(focal_loss(p, y).grad, fd, 1e-5)) << p << " " << y;
  }
}

TEST(SmoothL1, Examples) {
  EXPECT_EQ(smooth_l1(3.0, 3.0).value, 0.0);
  EXPECT_DOUBLE_EQ(smooth_l1(0.5, 0.0, 1.0).value, 0.125);
  EXPECT_DOUBLE_EQ(smooth_l1(2.0, 0.0, 1.0).value, 1.5);
  EXPECT_DOUBLE_EQ(smooth_l1(-2.0, 0.0, 1.0).grad, -1.0);
  // Continuous and C1 at the transition.
  EXPECT_NEAR(smooth_l1(1.0 - 1e-12, 0).value, smooth_l1(1.0 + 1e-12, 0).value, 1e-11);
  EXPECT_NEAR(smooth_l1(1.0 - 1e-12, 0).grad, smooth_l1(1.0 + 1e-12, 0).grad, 1e-11);
}

TEST(SmoothL1, GradientMatchesFiniteDifference) {
  Rng rng(52);
  for (int i = 0; i < 100; ++i) {
    const double beta = rng.uniform(0.2, 2.0);
    const double t = rng.uniform(-3, 3);
    double x = rng.uniform(-6, 6);
    if (std::abs(std::abs(x - t) - beta) < 1e-3) x += 0.01;
    const double fd =
        testing::central_difference([&](double v) { return smooth_l1(v, t, beta).value; }, x);
    EXPECT_TRUE(testing::rel_close(smooth_l1(x, t, beta).grad, fd, 1e-5));
  }
}

// One level with three points: two positives, one negative.
struct Toy {
  std::vector<PredictionMaps> preds;
  std::vector<AssignmentResult> assign;
  std::vector<LevelTargets> targets;
};

Toy make_toy() {
  Toy toy;
  PredictionMaps m;
  m.grid.height = 1;
  m.grid.width = 3;
  m.scores = {0.8, 0.3, 0.6};
  m.distances = {{0.1, -0.2, 0.3, 0.0}, {0, 0, 0, 0}, {2.5, -1.5, 0.2, 0.9}};
  m.angles = {0.1, 0.5, -0.4};
  toy.preds.push_back(m);
  AssignmentResult a;
  a.labels = {Label::kPositive, Label::kNegative, Label::kPositive};
  a.matched_gt = {0, std::nullopt, 1};
  toy.assign.push_back(a);
  LevelTargets t(3);
  t[0] = DistanceTarget{{0.0, 0.0, 0.0, 0.0}, 0.0};
  t[2] = DistanceTarget{{0.5, 0.5, 0.5, 0.5}, 0.3};
  toy.targets.push_back(t);
  return toy;
}

TEST(ClmLoss, ToyFixtureMatchesScalarRecomputation) {
  const Toy toy = make_toy();
  const LossBreakdown b = clm_loss(toy.preds, toy.assign, toy.targets, LossConfig{});

  // Scalar recomputation with gamma 2, alpha 0.25, beta 1, lambda 1.
  const auto fl_pos = [](double p) { return -0.25 * (1 - p) * (1 - p) * std::log(p); };
  const auto fl_neg = [](double p) { return -0.75 * p * p * std::log(1 - p); };
  const auto sl1 = [](double d) { return std::abs(d) < 1 ? 0.5 * d * d : std::abs(d) - 0.5; };
  const double ctr = (fl_pos(0.8) + fl_neg(0.3) + fl_pos(0.6)) / 3.0;
  const double dist = (sl1(0.1) + sl1(-0.2) + sl1(0.3) + sl1(0.0) +
                       sl1(2.0) + sl1(-2.0) + sl1(-0.3) + sl1(0.4)) / 2.0;
  const double angle = (sl1(0.1) + sl1(-0.7)) / 2.0;
  EXPECT_NEAR(b.ctr, ctr, 1e-9);
  EXPECT_NEAR(b.dist, dist, 1e-9);
  EXPECT_NEAR(b.angle, angle, 1e-9);
  EXPECT_NEAR(b.total, ctr + dist + angle, 1e-9);
  EXPECT_EQ(b.n_points, 3u);
  EXPECT_EQ(b.n_pos, 2u);
}

TEST(ClmLoss, AllNegative) {
  Toy toy = make_toy();
  toy.assign[0].labels = {Label::kNegative, Label::kNegative, Label::kNegative};
  toy.preds[0].scores = {kProbEps, kProbEps, kProbEps};
  const LossBreakdown b = clm_loss(toy.preds, toy.assign, toy.targets, LossConfig{});
  EXPECT_EQ(b.dist, 0.0);
  EXPECT_EQ(b.angle, 0.0);
  EXPECT_EQ(b.n_pos, 0u);
  EXPECT_NEAR(b.total, focal_loss(kProbEps, 0).value, 1e-18);
}

TEST(ClmLoss, ExactRegressionIsZero) {
  Toy toy = make_toy();
  toy.preds[0].distances[0] = toy.targets[0][0]->distances;
  toy.preds[0].distances[2] = toy.targets[0][2]->distances;
  toy.preds[0].angles[0] = toy.targets[0][0]->angle;
  toy.preds[0].angles[2] = toy.targets[0][2]->angle;
  const LossBreakdown b = clm_loss(toy.preds, toy.assign, toy.targets, LossConfig{});
  EXPECT_EQ(b.dist, 0.0);
  EXPECT_EQ(b.angle, 0.0);
}

TEST(ClmLoss, NormalizerAndNegativeInvariance) {
  const Toy toy = make_toy();
  const LossBreakdown b = clm_loss(toy.preds, toy.assign, toy.targets, LossConfig{});

  // Three extra negatives with zero focal loss: N doubles, ctr halves.
  Toy big = toy;
  big.preds[0].grid.width = 6;
  big.preds[0].scores.insert(big.preds[0].scores.end(), {0.0, 0.0, 0.0});
  big.preds[0].distances.resize(6);
  big.preds[0].angles.resize(6);
  big.assign[0].labels.resize(6, Label::kNegative);
  big.assign[0].matched_gt.resize(6);
  big.targets[0].resize(6);
  LossConfig cfg;
  const LossBreakdown bb = clm_loss(big.preds, big.assign, big.targets, cfg);
  const double extra = 3 * focal_loss(0.0, 0).value;
  EXPECT_NEAR(bb.ctr, (b.ctr * 3 + extra) / 6, 1e-15);
  EXPECT_NEAR(bb.ctr, b.ctr / 2, 1e-12);

  Toy moved = toy;
  moved.preds[0].distances[1] = {9, 9, 9, 9};
  moved.preds[0].angles[1] = 3.0;
  const LossBreakdown bm = clm_loss(moved.preds, moved.assign, moved.targets, cfg);
  EXPECT_EQ(bm.dist, b.dist);
  EXPECT_EQ(bm.angle, b.angle);
}

TEST(ClmLoss, MissingTargetAndShapeErrors) {
  Toy toy = make_toy();
  toy.targets[0][2].reset();
  EXPECT_THROW(clm_loss(toy.preds, toy.assign, toy.targets, LossConfig{}), ShapeError);
  Toy bad = make_toy();
  bad.preds[0].scores.pop_back();
  EXPECT_THROW(clm_loss(bad.preds, bad.assign, bad.targets, LossConfig{}), ShapeError);
  LossConfig cfg;
  cfg.lambda = 0.0;
  EXPECT_THROW(clm_loss(toy.preds, toy.assign, toy.targets, cfg), ConfigError);
}

TEST(ClmLoss, GradientsMatchFiniteDifferences) {
  const Toy toy = make_toy();
  LossConfig cfg;
  cfg.lambda = 1.7;
  LossGradients g;
  clm_loss(toy.preds, toy.assign, toy.targets, cfg, &g);
  const auto total_with = [&](auto mutate) {
    Toy t = toy;
    mutate(t);
    return clm_loss(t.preds, t.assign, t.targets, cfg).total;
  };
  for (std::size_t i = 0; i < 3; ++i) {
    const double fd = testing::central_difference(
        [&](double v) { return total_with([&](Toy& t) { t.preds[0].scores[i] = v; }); },
        toy.preds[0].scores[i]);
    EXPECT_TRUE(testing::rel_close(g.scores[0][i], fd, 1e-5));
    const double fa = testing::central_difference(
        [&](double v) { return total_with([&](Toy& t) { t.preds[0].angles[i] = v; }); },
        toy.preds[0].angles[i]);
    EXPECT_NEAR(g.angles[0][i], fa, 1e-8);
    const double fl = testing::central_difference(
        [&](double v) { return total_with([&](Toy& t) { t.preds[0].distances[i].l = v; }); },
        toy.preds[0].distances[i].l);
    EXPECT_NEAR(g.distances[0][i].l, fl, 1e-8);
  }
}

}  // namespace
}  // namespace obbkit
