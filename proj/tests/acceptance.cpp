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
// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Tolerances are fixed here and nowhere else.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "obbkit/obbkit.hpp"
#include "test_support.hpp"

namespace obbkit {
namespace {

using testing::Rng;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// 1. Clipping IoU against a Monte-Carlo estimate.
Outcome iou_vs_oracle() {
  constexpr int kPairs = 1000;
  constexpr std::uint64_t kSamples = 100000;
  constexpr double kTol = 0.01, kBudget = 60.0;
  const auto t0 = Clock::now();
  Rng rng(1);
  std::vector<std::pair<OrientedBox, OrientedBox>> pairs;
  for (int i = 0; i < kPairs; ++i) {
    const OrientedBox a = testing::random_box(rng);
    pairs.emplace_back(a, i % 10 == 0 ? testing::random_box(rng) : testing::random_neighbor(rng, a));
  }
  std::vector<double> err(kPairs);
  parallel_for(kPairs, [&](std::size_t i) {
    const auto& [a, b] = pairs[i];
    err[i] = std::abs(rotated_iou(a, b) - iou_oracle_mc(a, b, kSamples, 1000 + i));
  });
  double max_err = 0.0;
  for (double e : err) max_err = std::max(max_err, e);
  const double t = seconds_since(t0);
  return {max_err < kTol && t < kBudget,
          fmt("%d pairs x %llu samples: max |d| = %.5f (< %.2f), %.1f s (< %.0f s)", kPairs,
              static_cast<unsigned long long>(kSamples), max_err, kTol, t, kBudget)};
}

// 2. Unit square against itself rotated by 45 degrees.
Outcome unit_square_45() {
  const OrientedBox a{0, 0, 1, 1, 0}, b{0, 0, 1, 1, kQuarterPi};
  const double iou = rotated_iou(a, b);
  const double mc = iou_oracle_mc(a, b, 1000000, 2);
  const bool ok = std::abs(iou - 0.7071) <= 0.001 && std::abs(mc - iou) <= 0.002;
  return {ok, fmt("clipping %.6f (0.7071 +- 0.001), oracle %.6f (within 0.002)", iou, mc)};
}

// 3. Both coders round-trip.
Outcome coder_round_trips() {
  constexpr int kPairs = 1000;
  constexpr double kTol = 1e-6;
  Rng rng(3);
  const auto pyramid = make_pyramid(1024, 1024);
  const auto field_err = [](const OrientedBox& x, const OrientedBox& y) {
    return std::max({std::abs(x.cx - y.cx), std::abs(x.cy - y.cy), std::abs(x.w - y.w), std::abs(x.h - y.h),
                     std::abs(x.theta - y.theta)});
  };
  double clm = 0.0, refine = 0.0;
  for (int i = 0; i < kPairs; ++i) {
    const OrientedBox gt = canonicalize({rng.uniform(0, 1024), rng.uniform(0, 1024), rng.uniform(2, 400),
                                         rng.uniform(2, 400), rng.uniform(-kPi, kPi)});
    const FeatureGridSpec& grid = pyramid[static_cast<std::size_t>(rng.uniform_int(0, 4))];
    const Point p = from_local({rng.uniform(-0.49, 0.49) * gt.w, rng.uniform(-0.49, 0.49) * gt.h}, gt);
    const DistanceTarget t = encode_distances(p, gt, grid);
    clm = std::max(clm, field_err(decode_box(p, t.distances, t.angle, grid), gt));

    const OrientedBox prop = testing::random_neighbor(rng, gt);
    refine = std::max(refine, field_err(decode_refine(prop, encode_refine(prop, gt)), gt));
  }
  return {clm < kTol && refine < kTol,
          fmt("%d pairs each: distance coder max err %.2e, refine coder max err %.2e (< 1e-6)", kPairs, clm,
              refine)};
}

// 4. Region assignment against a per-point inequality oracle.
Outcome region_assignment() {
  constexpr int kScenes = 100;
  const AssignerConfig cfg;  // alpha 8, sigma 0.2
  const auto pyramid = make_pyramid(1024, 1024);
  bool partition = true;
  for (std::size_t k = 0; k + 1 < pyramid.size(); ++k) {
    const ScaleRange a = level_scale_range(pyramid[k], cfg, k == 0, false);
    const ScaleRange b = level_scale_range(pyramid[k + 1], cfg, false, k + 2 == pyramid.size());
    partition &= a.upper == b.lower && a.lower < a.upper;
  }
  partition &= level_scale_range(pyramid.front(), cfg, true, false).lower == cfg.min_size_floor;
  partition &= level_scale_range(pyramid.back(), cfg, false, true).upper == cfg.max_size_ceiling;

  std::size_t mismatches = 0, points = 0, positives = 0;
  for (int scene = 0; scene < kScenes; ++scene) {
    Rng rng(4000 + scene);
    std::vector<OrientedBox> gts;
    for (int g = 0; g < 10; ++g) {
      const double scale = std::exp(rng.uniform(std::log(8.0), std::log(700.0)));
      const double aspect = std::exp(rng.uniform(-1.2, 1.2));
      gts.push_back({rng.uniform(0, 1024), rng.uniform(0, 1024), scale * std::sqrt(aspect),
                     scale / std::sqrt(aspect), rng.uniform(-kPi, kPi)});
    }
    // Oracle level: the single interval [a*s/sqrt2, a*s*sqrt2) holding sqrt(wh).
    std::vector<int> oracle_level(gts.size());
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double s = std::sqrt(gts[g].w * gts[g].h);
      int hits = 0;
      for (std::size_t k = 0; k < pyramid.size(); ++k) {
        const double stride = pyramid[k].stride;
        const double lo = k == 0 ? 0.0 : cfg.alpha * stride / std::sqrt(2.0);
        const double hi = k + 1 == pyramid.size() ? 1e5 : cfg.alpha * stride * std::sqrt(2.0);
        if (s >= lo && s < hi) {
          oracle_level[g] = static_cast<int>(k);
          ++hits;
        }
      }
      partition &= hits == 1 && assign_level(gts[g], cfg, pyramid) == static_cast<std::size_t>(oracle_level[g]);
    }
    const auto res = assign_pyramid(pyramid, gts, cfg);
    for (std::size_t k = 0; k < pyramid.size(); ++k) {
      const FeatureGridSpec& grid = pyramid[k];
      for (int row = 0; row < grid.height; ++row) {
        for (int col = 0; col < grid.width; ++col) {
          const double x = col * grid.stride + grid.stride / 2, y = row * grid.stride + grid.stride / 2;
          std::optional<std::size_t> best;
          for (std::size_t g = 0; g < gts.size(); ++g) {
            if (oracle_level[g] != static_cast<int>(k)) continue;
            const OrientedBox& b = gts[g];
            const double c = std::cos(b.theta), s = std::sin(b.theta);
            const double lx = c * (x - b.cx) - s * (y - b.cy);
            const double ly = s * (x - b.cx) + c * (y - b.cy);
            if (!(std::abs(lx) < cfg.sigma * b.w / 2 && std::abs(ly) < cfg.sigma * b.h / 2)) continue;
            if (!best || b.area() < gts[*best].area()) best = g;
          }
          const std::size_t i = grid.index(col, row);
          const Label want = best ? Label::kPositive : Label::kNegative;
          mismatches += res[k].labels[i] != want || res[k].matched_gt[i] != best;
          positives += best.has_value();
          ++points;
        }
      }
    }
  }
  return {mismatches == 0 && partition,
          fmt("%d scenes, %zu points (%zu positive), %zu mismatches; levels partition: %s", kScenes, points,
              positives, mismatches, partition ? "yes" : "no")};
}

// 5. AlignConv sampling, offsets and forward pass.
Outcome align_conv() {
  Rng rng(5);
  FeatureGridSpec grid = make_level(3, 256, 256);
  double worst_outside = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const OrientedBox b{rng.uniform(0, 256), rng.uniform(0, 256), rng.uniform(1, 200), rng.uniform(1, 200),
                        rng.uniform(-kPi, kPi)};
    for (const Point& q : sampling_positions(b, grid)) {
      const Point l = to_local({q.x * grid.stride, q.y * grid.stride}, b);
      worst_outside = std::max({worst_outside, std::abs(l.x) - b.w / 2, std::abs(l.y) - b.h / 2});
    }
  }
  std::vector<OrientedBox> identity;
  for (int row = 0; row < grid.height; ++row)
    for (int col = 0; col < grid.width; ++col)
      identity.push_back({col * grid.stride, row * grid.stride, 2 * grid.stride, 2 * grid.stride, 0});
  double max_offset = 0.0;
  for (const Point& o : offset_field(identity, grid).values())
    max_offset = std::max({max_offset, std::abs(o.x), std::abs(o.y)});

  grid = make_level(3, 192, 192);  // 24 x 24 map
  FeatureMap coords(2, grid.height, grid.width);
  for (int row = 0; row < grid.height; ++row)
    for (int col = 0; col < grid.width; ++col) {
      coords.at(0, row, col) = col;
      coords.at(1, row, col) = row;
    }
  std::vector<OrientedBox> boxes;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    boxes.push_back({rng.uniform(60, 130), rng.uniform(60, 130), rng.uniform(4, 60), rng.uniform(4, 60),
                     rng.uniform(-kPi, kPi)});
  }
  const FeatureMap y = align_forward(coords, KernelWeights::uniform(2), boxes, grid);
  double center_err = 0.0;
  for (int row = 0; row < grid.height; ++row)
    for (int col = 0; col < grid.width; ++col) {
      const OrientedBox& b = boxes[grid.index(col, row)];
      center_err = std::max({center_err, std::abs(y.at(0, row, col) - b.cx / grid.stride),
                             std::abs(y.at(1, row, col) - b.cy / grid.stride)});
    }
  const bool ok = worst_outside <= 1e-9 && max_offset == 0.0 && center_err <= 1e-6;
  return {ok, fmt("max excursion outside box %.2e (<= 1e-9), identity offsets max %.1e (== 0), "
                  "center error %.2e (<= 1e-6)",
                  std::max(worst_outside, 0.0), max_offset, center_err)};
}

// 6. Loss gradients and the aggregate on a toy fixture.
Outcome loss_gradients() {
  Rng rng(6);
  int focal_bad = 0, sl1_bad = 0;
  double focal_worst = 0.0, sl1_worst = 0.0;
  const auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); };
  for (int i = 0; i < 100; ++i) {
    const double p = rng.uniform(0.01, 0.99);
    const int y = rng.uniform_int(0, 1);
    const double fd = testing::central_difference([&](double q) { return focal_loss(q, y).value; }, p, 1e-5);
    const double r = rel(focal_loss(p, y).grad, fd);
    focal_worst = std::max(focal_worst, r);
    focal_bad += r > 1e-5;
  }
  for (int i = 0; i < 100; ++i) {
    const double t = rng.uniform(-3, 3);
    double x = rng.uniform(-6, 6);
    if (std::abs(std::abs(x - t) - 1.0) < 1e-3) x += 0.01;  // keep h away from the kink
    const double fd = testing::central_difference([&](double v) { return smooth_l1(v, t).value; }, x, 1e-5);
    const double r = rel(smooth_l1(x, t).grad, fd);
    sl1_worst = std::max(sl1_worst, r);
    sl1_bad += r > 1e-5;
  }

  // Toy: three points, two positive.
  PredictionMaps m;
  m.grid.height = 1;
  m.grid.width = 3;
  m.scores = {0.8, 0.3, 0.6};
  m.distances = {{0.1, -0.2, 0.3, 0.0}, {0, 0, 0, 0}, {2.5, -1.5, 0.2, 0.9}};
  m.angles = {0.1, 0.5, -0.4};
  AssignmentResult a;
  a.labels = {Label::kPositive, Label::kNegative, Label::kPositive};
  a.matched_gt = {0, std::nullopt, 1};
  LevelTargets tg(3);
  tg[0] = DistanceTarget{{0.0, 0.0, 0.0, 0.0}, 0.0};
  tg[2] = DistanceTarget{{0.5, 0.5, 0.5, 0.5}, 0.3};
  const LossBreakdown b = clm_loss({m}, {a}, {tg}, LossConfig{});
  const auto fl_pos = [](double p) { return -0.25 * (1 - p) * (1 - p) * std::log(p); };
  const auto fl_neg = [](double p) { return -0.75 * p * p * std::log(1 - p); };
  const auto sl1 = [](double d) { return std::abs(d) < 1 ? 0.5 * d * d : std::abs(d) - 0.5; };
  const double expect = (fl_pos(0.8) + fl_neg(0.3) + fl_pos(0.6)) / 3.0 +
                        (sl1(0.1) + sl1(-0.2) + sl1(0.3) + sl1(0.0) + sl1(2.0) + sl1(-2.0) + sl1(-0.3) + sl1(0.4)) / 2.0 +
                        (sl1(0.1) + sl1(-0.7)) / 2.0;
  const double toy_err = std::abs(b.total - expect);
  return {focal_bad == 0 && sl1_bad == 0 && toy_err <= 1e-9,
          fmt("focal worst rel %.1e, smooth-L1 worst rel %.1e (<= 1e-5, 100 points each); toy total %.12f, "
              "error %.1e (<= 1e-9)",
              focal_worst, sl1_worst, b.total, toy_err)};
}

// 7. NMS against the brute-force greedy oracle.
Outcome nms_oracle() {
  std::size_t sets = 0, mismatched = 0;
  for (double thr : {0.5, 0.8}) {
    for (std::size_t n : {1, 2, 10, 50, 100, 200, 350, 500}) {
      for (int rep = 0; rep < 3; ++rep) {
        Rng rng(7000 + n * 10 + rep);
        const double extent = 10.0 + std::sqrt(static_cast<double>(n)) * 6.0;  // crowded
        std::vector<OrientedBox> boxes;
        std::vector<double> scores;
        for (std::size_t i = 0; i < n; ++i) {
          boxes.push_back({rng.uniform(0, extent), rng.uniform(0, extent), rng.uniform(8, 30), rng.uniform(8, 30),
                           rng.uniform(-kPi, kPi)});
          scores.push_back(rep == 2 ? std::round(rng.uniform() * 10) / 10 : rng.uniform());  // ties on rep 2
        }
        mismatched += rotated_nms(boxes, scores, thr) != testing::brute_force_nms(boxes, scores, thr);
        ++sets;
      }
    }
  }
  return {mismatched == 0, fmt("%zu seeded sets, n up to 500, thresholds {0.5, 0.8}: %zu mismatches", sets, mismatched)};
}

struct SimTally {
  std::size_t gts = 0, hit = 0;
};

SimTally simulate_recall(std::size_t scenes, double noise, double iou_thr) {
  SceneConfig cfg;
  cfg.noise = noise;
  std::vector<SimTally> per(scenes);
  parallel_for(scenes, [&](std::size_t i) {
    const Scene s = simulate_scene(i, cfg);
    const auto props = generate_proposals(s.outputs);
    for (const auto& gt : s.gts) {
      ++per[i].gts;
      for (const auto& p : props) {
        if (rotated_iou(p.box, gt) >= iou_thr) {
          ++per[i].hit;
          break;
        }
      }
    }
  });
  SimTally total;
  for (const auto& t : per) {
    total.gts += t.gts;
    total.hit += t.hit;
  }
  return total;
}

// 8. End-to-end simulator recall.
Outcome simulator_recall() {
  constexpr std::size_t kSeeds = 100;
  const auto t0 = Clock::now();
  const SimTally clean = simulate_recall(kSeeds, 0.0, 0.999);
  const SimTally noisy = simulate_recall(kSeeds, 0.05, 0.7);
  const double t = seconds_since(t0);
  const double r0 = static_cast<double>(clean.hit) / static_cast<double>(clean.gts);
  const double r1 = static_cast<double>(noisy.hit) / static_cast<double>(noisy.gts);
  return {r0 == 1.0 && r1 >= 0.95 && t < 120.0,
          fmt("noise 0: recall %.4f @0.999 (== 1); noise 0.05: recall %.4f @0.7 (>= 0.95); %zu seeds each, "
              "%.1f s (< 120 s)",
              r0, r1, kSeeds, t)};
}

// 9. IoU and regression-target histograms of IoU-assigned proposals.
Outcome proposal_histograms() {
  constexpr std::size_t kScenes = 40;
  SceneConfig cfg;
  cfg.noise = 0.05;
  Histogram iou_h(0.0, 1.0, 20);
  std::size_t below = 0, samples = 0;
  double sum_dw = 0.0, sum_dh = 0.0;
  for (std::size_t seed = 0; seed < kScenes; ++seed) {
    const Scene s = simulate_scene(seed, cfg);
    std::vector<OrientedBox> boxes;
    for (const auto& p : generate_proposals(s.outputs)) boxes.push_back(p.box);
    iou_h.merge(iou_histogram(boxes, s.gts, 20, 0.7, 0.3));
    const IouAssignment a = assign_by_iou_detailed(boxes, s.gts, 0.7, 0.3);
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (a.result.labels[i] == Label::kPositive && !(a.max_iou[i] > 0.7)) ++below;
    const TargetHistograms t = target_histogram(boxes, s.gts, 20, 1.0, 0.7, 0.3);
    sum_dw += t.mean_dw * static_cast<double>(t.samples);
    sum_dh += t.mean_dh * static_cast<double>(t.samples);
    samples += t.samples;
  }
  std::size_t mass_below = 0;
  for (std::size_t b = 0; b < iou_h.counts.size(); ++b)
    if (iou_h.bin_hi(b) <= 0.7) mass_below += iou_h.counts[b];
  const double mdw = samples ? sum_dw / static_cast<double>(samples) : NAN;
  const double mdh = samples ? sum_dh / static_cast<double>(samples) : NAN;
  const bool ok = samples > 0 && mass_below == 0 && below == 0 && std::abs(mdw) < 0.05 && std::abs(mdh) < 0.05;
  return {ok, fmt("%zu positives over %zu scenes: histogram mass below 0.7 = %zu (== 0); mean dw %.4f, "
                  "mean dh %.4f (|.| < 0.05)",
                  samples, kScenes, mass_below + below, mdw, mdh)};
}

// 10. VOC07 / VOC12 AP on a hand-walked fixture.
Outcome ap_fixture() {
  const GroundTruthSet gts{{"img", {{{10, 10, 8, 4, 0}, "ship", false}, {{40, 40, 8, 4, 0.2}, "ship", false}}}};
  const std::vector<DetectionRecord> dets{
      {"img", {10, 10, 8, 4, 0}, "ship", 0.9},   // TP
      {"img", {70, 70, 8, 4, 0}, "ship", 0.8},   // FP
      {"img", {40, 40, 8, 4, 0.2}, "ship", 0.7},  // TP
  };
  const double v07 = average_precision(dets, gts, 0.5, ApMetric::kVoc07);
  const double v12 = average_precision(dets, gts, 0.5, ApMetric::kVoc12);
  const std::vector<DetectionRecord> perfect{dets[0], dets[2]};
  const double p07 = mean_ap(perfect, gts, 0.5, ApMetric::kVoc07).map;
  const double p12 = mean_ap(perfect, gts, 0.5, ApMetric::kVoc12).map;
  const bool ok = std::abs(v07 - 0.8485) <= 1e-4 && std::abs(v12 - 0.8333) <= 1e-4 && p07 == 1.0 && p12 == 1.0;
  return {ok, fmt("voc07 %.6f (0.8485 +- 1e-4), voc12 %.6f (0.8333 +- 1e-4); perfect set %.17g / %.17g (== 1)", v07,
                  v12, p07, p12)};
}

// 11. DOTA annotation round-trip and diagnostics.
Outcome dota_parser() {
  Rng rng(11);
  std::vector<GroundTruthRecord> recs;
  for (int i = 0; i < 1000; ++i) {
    const OrientedBox b = canonicalize({rng.uniform(0, 4000), rng.uniform(0, 4000), rng.uniform(2, 500),
                                        rng.uniform(2, 500), rng.uniform(-kPi, kPi)});
    recs.push_back({b, "small-vehicle", i % 7 == 0});
  }
  const auto back = parse_dota_annotation("imagesource:GoogleEarth\ngsd:0.1\n" + format_dota_annotation(recs));
  double worst = back.size() == recs.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(back.size(), recs.size()); ++i) {
    const OrientedBox &x = back[i].box, &y = recs[i].box;
    worst = std::max({worst, std::abs(x.cx - y.cx), std::abs(x.cy - y.cy), std::abs(x.w - y.w),
                      std::abs(x.h - y.h), std::abs(x.theta - y.theta)});
    if (back[i].difficult != recs[i].difficult || back[i].category != recs[i].category) worst = INFINITY;
  }

  const std::string bad =
      "imagesource:GoogleEarth\n"
      "0 0 4 0 4 2 0 2 ship 0\n"
      "0 0 4 0 4 2 0 ship 0\n"
      "\n"
      "0 0 4 0 4 2 0 2 ship 0\n"
      "0 0 4 0 four 2 0 2 ship 0\n"
      "0 0 4 0 4 2 0 2 ship 2\n";
  std::string msg;
  try {
    parse_dota_annotation(bad);
  } catch (const ParseError& e) {
    msg = e.what();
  }
  const auto has = [&](const char* s) { return msg.find(s) != std::string::npos; };
  const bool lines_ok = has("line 3:") && has("line 6:") && has("line 7:") && !has("line 1:") && !has("line 2:") &&
                        !has("line 4:") && !has("line 5:");
  return {worst <= 1e-6 && lines_ok,
          fmt("1000 boxes: max field error %.2e (<= 1e-6); malformed lines 3, 6, 7 reported exactly: %s", worst,
              lines_ok ? "yes" : "no")};
}

}  // namespace
}  // namespace obbkit

int main() {
  using namespace obbkit;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"rotated IoU vs Monte-Carlo oracle", iou_vs_oracle},
      {"unit square at 45 degrees", unit_square_45},
      {"encode/decode round-trips", coder_round_trips},
      {"region assignment vs brute force", region_assignment},
      {"AlignConv sampling and offsets", align_conv},
      {"loss gradients and toy aggregate", loss_gradients},
      {"rotated NMS vs brute force", nms_oracle},
      {"end-to-end simulator recall", simulator_recall},
      {"proposal IoU / target histograms", proposal_histograms},
      {"VOC07 / VOC12 AP fixture", ap_fixture},
      {"DOTA parser golden tests", dota_parser},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
