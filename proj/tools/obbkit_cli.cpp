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
// obbkit command-line tool. Box literals are "cx,cy,w,h,theta" with theta in
// radians; every randomised subcommand takes --seed (default 0).
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "obbkit/obbkit.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace obbkit::cli {
namespace {

std::vector<double> parse_numbers(const std::string& text, std::size_t expected, const std::string& what) {
  std::vector<double> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = text.find(',', start);
    const std::string field = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
    const auto v = detail::parse_double(field);
    if (!v) throw ParseError(what + ": '" + field + "' is not a number in '" + text + "'");
    out.push_back(*v);
    if (end == std::string::npos) break;
    start = end + 1;
  }
  if (out.size() != expected) {
    throw ParseError(what + ": expected " + std::to_string(expected) + " comma-separated values, got '" +
                     text + "'");
  }
  return out;
}

OrientedBox parse_box(const std::string& text, const std::string& what) {
  const auto v = parse_numbers(text, 5, what);
  const OrientedBox b{v[0], v[1], v[2], v[3], v[4]};
  validate(b);
  return b;
}

Point parse_point(const std::string& text, const std::string& what) {
  const auto v = parse_numbers(text, 2, what);
  return {v[0], v[1]};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

// Numeric CSV with an optional header row.
std::vector<std::vector<double>> read_csv(const std::string& path, std::size_t cols) {
  const std::string text = read_file(path);
  const auto lines = detail::split_lines(text);
  std::vector<std::vector<double>> rows;
  std::vector<std::string> problems;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (detail::is_blank(lines[n])) continue;
    if (n == 0 && !detail::parse_double(lines[n].substr(0, lines[n].find(',')))) continue;  // header
    try {
      rows.push_back(parse_numbers(lines[n], cols, "line " + std::to_string(n + 1)));
    } catch (const ParseError& e) {
      problems.push_back(e.what());
    }
  }
  if (!problems.empty()) detail::throw_collected(path + ":", problems);
  return rows;
}

std::vector<OrientedBox> read_boxes(const std::string& path) {
  std::vector<OrientedBox> out;
  for (const auto& r : read_csv(path, 5)) {
    out.push_back({r[0], r[1], r[2], r[3], r[4]});
    validate(out.back());
  }
  return out;
}

std::string fmt(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string box_csv(const OrientedBox& b) {
  return detail::format_double(b.cx) + "," + detail::format_double(b.cy) + "," + detail::format_double(b.w) +
         "," + detail::format_double(b.h) + "," + detail::format_double(b.theta);
}

std::string scene_id(std::uint64_t seed) { return "scene_" + std::to_string(seed); }

struct SceneRun {
  Scene scene;
  std::vector<Proposal> proposals;
};

// Scenes seed, seed+1, ... run in parallel; results land in seed order.
std::vector<SceneRun> run_scenes(std::uint64_t seed, std::size_t count, const SceneConfig& scfg,
                                 const ProposalConfig& pcfg) {
  std::vector<SceneRun> runs(count);
  parallel_for(count, [&](std::size_t i) {
    runs[i].scene = simulate_scene(seed + i, scfg);
    runs[i].proposals = generate_proposals(runs[i].scene.outputs, pcfg);
  });
  return runs;
}

std::vector<OrientedBox> boxes_of(const std::vector<Proposal>& props) {
  std::vector<OrientedBox> out;
  out.reserve(props.size());
  for (const auto& p : props) out.push_back(p.box);
  return out;
}

void add_proposal_options(CLI::App* cmd, ProposalConfig& cfg) {
  cmd->add_option("--nms-thr", cfg.nms_thr, "Rotated NMS IoU threshold")->capture_default_str();
  cmd->add_option("--pre-nms-top-k", cfg.pre_nms_top_k, "Candidates kept per level before NMS")
      ->capture_default_str();
  cmd->add_option("--post-nms-top-n", cfg.post_nms_top_n, "Proposals kept after NMS")->capture_default_str();
  cmd->add_option("--score-floor", cfg.score_floor, "Drop fused scores below this value")
      ->capture_default_str();
}

void add_scene_options(CLI::App* cmd, SceneConfig& cfg, std::uint64_t& seed) {
  cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
  cmd->add_option("--noise", cfg.noise, "Std-dev of noise on every regression channel")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--alpha", cfg.assigner.alpha, "Level-range scale factor")->capture_default_str();
  cmd->add_option("--sigma", cfg.assigner.sigma, "Central-region rate")->capture_default_str();
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"obbkit: oriented-box geometry, assignment, proposals and evaluation.\n"
               "Box literals are \"cx,cy,w,h,theta\" (theta in radians)."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // iou
  std::string iou_a, iou_b;
  std::uint64_t iou_samples = 0, iou_seed = 0;
  auto* iou = app.add_subcommand("iou", "Rotated IoU of two boxes");
  iou->add_option("--a", iou_a, "First box")->required();
  iou->add_option("--b", iou_b, "Second box")->required();
  iou->add_option("--samples", iou_samples, "Also print a Monte-Carlo estimate with this many samples");
  iou->add_option("--seed", iou_seed, "Seed for the Monte-Carlo estimate")->capture_default_str();
  iou->callback([&] {
    const OrientedBox a = parse_box(iou_a, "--a"), b = parse_box(iou_b, "--b");
    std::cout << fmt(rotated_iou(a, b), 6) << "\n";
    if (iou_samples > 0) std::cout << "oracle " << fmt(iou_oracle_mc(a, b, iou_samples, iou_seed), 6) << "\n";
  });

  // nms
  std::string nms_in, nms_out;
  double nms_thr = 0.8;
  auto* nms = app.add_subcommand("nms", "Greedy rotated NMS over a CSV of cx,cy,w,h,theta,score rows");
  nms->add_option("--input", nms_in, "Input CSV")->required();
  nms->add_option("--thr", nms_thr, "IoU threshold")->capture_default_str();
  nms->add_option("--output", nms_out, "Output CSV (default stdout)");
  nms->callback([&] {
    std::vector<OrientedBox> boxes;
    std::vector<double> scores;
    for (const auto& r : read_csv(nms_in, 6)) {
      boxes.push_back({r[0], r[1], r[2], r[3], r[4]});
      validate(boxes.back());
      scores.push_back(r[5]);
    }
    std::string out = "index\n";
    for (std::size_t i : rotated_nms(boxes, scores, nms_thr)) out += std::to_string(i) + "\n";
    write_output(nms_out, out);
  });

  // encode / decode
  std::string mode = "clm", point_s, gt_s, prop_s, dist_s, deltas_s;
  int level = 3;
  double theta = 0.0;
  const auto grid_for = [&](int lvl) {
    if (lvl < 2 || lvl > 6) throw ConfigError("--level must be in [2, 6]");
    return make_level(lvl, 1024, 1024);
  };
  auto* enc = app.add_subcommand("encode", "Regression targets (clm: point distances; refine: box deltas)");
  enc->add_option("--mode", mode, "clm or refine")->check(CLI::IsMember({"clm", "refine"}))->capture_default_str();
  enc->add_option("--point", point_s, "Grid point x,y (clm)");
  enc->add_option("--level", level, "Pyramid level 2..6 (clm)")->capture_default_str();
  enc->add_option("--gt", gt_s, "Ground-truth box")->required();
  enc->add_option("--proposal", prop_s, "Proposal box (refine)");
  enc->callback([&] {
    const OrientedBox gt = parse_box(gt_s, "--gt");
    ordered_json j;
    if (mode == "clm") {
      if (point_s.empty()) throw ConfigError("encode --mode clm needs --point");
      const DistanceTarget t = encode_distances(parse_point(point_s, "--point"), gt, grid_for(level));
      j = {{"l", t.distances.l}, {"t", t.distances.t}, {"r", t.distances.r}, {"b", t.distances.b}, {"theta", t.angle}};
    } else {
      if (prop_s.empty()) throw ConfigError("encode --mode refine needs --proposal");
      const RefineDeltas d = encode_refine(parse_box(prop_s, "--proposal"), gt);
      j = {{"dx", d.dx}, {"dy", d.dy}, {"dw", d.dw}, {"dh", d.dh}, {"dtheta", d.dtheta}};
    }
    std::cout << j.dump(2) << "\n";
  });

  auto* dec = app.add_subcommand("decode", "Inverse of encode; prints the box as cx,cy,w,h,theta");
  dec->add_option("--mode", mode, "clm or refine")->check(CLI::IsMember({"clm", "refine"}))->capture_default_str();
  dec->add_option("--point", point_s, "Grid point x,y (clm)");
  dec->add_option("--level", level, "Pyramid level 2..6 (clm)")->capture_default_str();
  dec->add_option("--dist", dist_s, "Normalised distances l,t,r,b (clm)");
  dec->add_option("--theta", theta, "Angle in radians (clm)");
  dec->add_option("--proposal", prop_s, "Proposal box (refine)");
  dec->add_option("--deltas", deltas_s, "dx,dy,dw,dh,dtheta (refine)");
  dec->callback([&] {
    OrientedBox b;
    if (mode == "clm") {
      if (point_s.empty() || dist_s.empty()) throw ConfigError("decode --mode clm needs --point and --dist");
      const auto d = parse_numbers(dist_s, 4, "--dist");
      b = decode_box(parse_point(point_s, "--point"), {d[0], d[1], d[2], d[3]}, theta, grid_for(level));
    } else {
      if (prop_s.empty() || deltas_s.empty()) throw ConfigError("decode --mode refine needs --proposal and --deltas");
      const auto d = parse_numbers(deltas_s, 5, "--deltas");
      b = decode_refine(parse_box(prop_s, "--proposal"), {d[0], d[1], d[2], d[3], d[4]});
    }
    std::cout << box_csv(b) << "\n";
  });

  // assign
  std::string assign_gts, assign_out;
  std::vector<std::string> assign_boxes;
  int img_w = 1024, img_h = 1024;
  AssignerConfig acfg;
  auto* asg = app.add_subcommand("assign", "Region assignment of pyramid points; prints positives as CSV");
  asg->add_option("--gts", assign_gts, "CSV of gt boxes (cx,cy,w,h,theta)");
  asg->add_option("--box", assign_boxes, "Gt box literal (repeatable)");
  asg->add_option("--image-width", img_w, "Image width")->capture_default_str();
  asg->add_option("--image-height", img_h, "Image height")->capture_default_str();
  asg->add_option("--alpha", acfg.alpha, "Level-range scale factor")->capture_default_str();
  asg->add_option("--sigma", acfg.sigma, "Central-region rate")->capture_default_str();
  asg->add_option("--output", assign_out, "Output CSV (default stdout)");
  asg->callback([&] {
    std::vector<OrientedBox> gts;
    if (!assign_gts.empty()) gts = read_boxes(assign_gts);
    for (const auto& s : assign_boxes) gts.push_back(parse_box(s, "--box"));
    if (gts.empty()) throw ConfigError("assign needs --gts or --box");
    const auto pyramid = make_pyramid(img_w, img_h);
    const auto res = assign_pyramid(pyramid, gts, acfg);
    std::string out = "level,col,row,x,y,gt\n";
    for (std::size_t l = 0; l < pyramid.size(); ++l) {
      const FeatureGridSpec& g = pyramid[l];
      for (int row = 0; row < g.height; ++row) {
        for (int col = 0; col < g.width; ++col) {
          const std::size_t i = g.index(col, row);
          if (res[l].labels[i] != Label::kPositive) continue;
          const Point p = g.point(col, row);
          out += std::to_string(g.level) + "," + std::to_string(col) + "," + std::to_string(row) + "," +
                 detail::format_double(p.x) + "," + detail::format_double(p.y) + "," +
                 std::to_string(*res[l].matched_gt[i]) + "\n";
        }
      }
    }
    write_output(assign_out, out);
  });

  // offsets
  std::string off_box;
  int off_col = 0, off_row = 0;
  auto* off = app.add_subcommand("offsets", "AlignConv sampling lattice and offsets for one box at one grid cell");
  off->add_option("--box", off_box, "Box in image pixels")->required();
  off->add_option("--level", level, "Pyramid level 2..6")->capture_default_str();
  off->add_option("--col", off_col, "Grid column")->capture_default_str();
  off->add_option("--row", off_row, "Grid row")->capture_default_str();
  off->callback([&] {
    const FeatureGridSpec grid = grid_for(level);
    const OrientedBox b = parse_box(off_box, "--box");
    const SamplingLattice s = sampling_positions(b, grid);
    std::string out = "k,sample_x,sample_y,offset_x,offset_y\n";
    for (int k = 0; k < kKernelPoints; ++k) {
      const Point r = kernel_offset(k);
      out += std::to_string(k) + "," + detail::format_double(s[k].x) + "," + detail::format_double(s[k].y) + "," +
             detail::format_double(s[k].x - off_col - r.x) + "," + detail::format_double(s[k].y - off_row - r.y) +
             "\n";
    }
    std::cout << out;
  });

  // loss
  SceneConfig loss_scene;
  std::uint64_t loss_seed = 0;
  LossConfig lcfg;
  auto* loss = app.add_subcommand("loss", "Coarse-location loss on a simulated scene; prints JSON");
  add_scene_options(loss, loss_scene, loss_seed);
  loss->add_option("--lambda", lcfg.lambda, "Weight of the score term")->capture_default_str();
  loss->callback([&] {
    const Scene s = simulate_scene(loss_seed, loss_scene);
    std::vector<PredictionMaps> preds;
    for (const auto& o : s.outputs) preds.push_back(o.coarse);
    const LossBreakdown b = clm_loss(preds, s.assignments, s.targets, lcfg);
    const ordered_json j = {{"ctr", b.ctr},       {"dist", b.dist},         {"angle", b.angle},
                            {"total", b.total},   {"n_points", b.n_points}, {"n_pos", b.n_pos}};
    std::cout << j.dump(2) << "\n";
  });

  // propose
  SceneConfig prop_scene;
  ProposalConfig pcfg;
  std::uint64_t prop_seed = 0;
  std::string prop_out, prop_gts_out, prop_format = "text";
  auto* prop = app.add_subcommand("propose", "Proposals for a simulated scene in the detection format");
  add_scene_options(prop, prop_scene, prop_seed);
  add_proposal_options(prop, pcfg);
  prop->add_option("--output", prop_out, "Detections file (default stdout)");
  prop->add_option("--format", prop_format, "text or json")->check(CLI::IsMember({"text", "json"}))->capture_default_str();
  prop->add_option("--gts-output", prop_gts_out, "Also write the scene's gts as a DOTA annotation");
  prop->callback([&] {
    const auto runs = run_scenes(prop_seed, 1, prop_scene, pcfg);
    std::vector<DetectionRecord> dets;
    for (const auto& p : runs[0].proposals) dets.push_back({scene_id(prop_seed), p.box, "object", p.score});
    write_output(prop_out, prop_format == "json" ? detections_to_json(dets).dump(2) + "\n" : format_detections(dets));
    if (!prop_gts_out.empty()) {
      std::vector<GroundTruthRecord> gts;
      for (const auto& g : runs[0].scene.gts) gts.push_back({g, "object", false});
      write_output(prop_gts_out, format_dota_annotation(gts));
    }
  });

  // simulate
  SceneConfig sim_scene;
  ProposalConfig sim_pcfg;
  std::uint64_t sim_seed = 0;
  std::size_t sim_scenes = 1;
  double sim_iou = 0.5;
  auto* sim = app.add_subcommand("simulate", "Simulated scenes through proposal generation; reports recall");
  add_scene_options(sim, sim_scene, sim_seed);
  add_proposal_options(sim, sim_pcfg);
  sim->add_option("--scenes", sim_scenes, "Number of scenes (seeds seed..seed+n-1)")->capture_default_str();
  sim->add_option("--iou-thr", sim_iou, "IoU a proposal needs to recall a gt")->capture_default_str();
  sim->callback([&] {
    const auto runs = run_scenes(sim_seed, sim_scenes, sim_scene, sim_pcfg);
    ProposalSet props;
    GroundTruthSet gts;
    std::size_t n_props = 0, n_gts = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const std::string id = scene_id(sim_seed + i);
      props[id] = boxes_of(runs[i].proposals);
      for (const auto& g : runs[i].scene.gts) gts[id].push_back({g, "object", false});
      n_props += runs[i].proposals.size();
      n_gts += runs[i].scene.gts.size();
    }
    std::cout << "scenes " << runs.size() << "\n"
              << "gts " << n_gts << "\n"
              << "proposals " << n_props << "\n"
              << "recall " << fmt(recall(props, gts, sim_iou), 4) << "\n";
  });

  // eval
  std::string eval_dets, eval_json, eval_metric = "voc12";
  std::vector<std::string> eval_gts;
  double eval_iou = 0.5;
  auto* ev = app.add_subcommand("eval", "Per-class AP and mAP of detections against DOTA annotations");
  ev->add_option("--dets", eval_dets, "Detections (text, or JSON if the name ends in .json)")->required();
  ev->add_option("--gts", eval_gts, "Annotation directory or files; image id = file stem")->required();
  ev->add_option("--iou-thr", eval_iou, "Match threshold")->capture_default_str();
  ev->add_option("--metric", eval_metric, "voc07 or voc12")->capture_default_str();
  ev->add_option("--json", eval_json, "Also write the result as JSON to this file");
  ev->callback([&] {
    const ApMetric metric = parse_metric(eval_metric);
    const std::string text = read_file(eval_dets);
    const auto dets = fs::path(eval_dets).extension() == ".json"
                          ? detections_from_json(ordered_json::parse(text))
                          : parse_detections(text);
    std::vector<fs::path> files;
    for (const auto& g : eval_gts) {
      if (fs::is_directory(g)) {
        for (const auto& e : fs::directory_iterator(g))
          if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
      } else {
        files.emplace_back(g);
      }
    }
    std::sort(files.begin(), files.end());
    GroundTruthSet gts;
    for (const auto& f : files) {
      try {
        gts[f.stem().string()] = parse_dota_annotation(read_file(f.string()));
      } catch (const ParseError& e) {
        throw ParseError(f.string() + ": " + e.what());
      }
    }
    const MapResult r = mean_ap(dets, gts, eval_iou, metric);
    std::cout << "class AP\n";
    for (const auto& [cat, ap] : r.per_class) std::cout << cat << " " << fmt(ap, 4) << "\n";
    std::cout << "mAP " << fmt(r.map, 4) << "\n";
    if (!eval_json.empty()) {
      ordered_json per = ordered_json::object();
      for (const auto& [cat, ap] : r.per_class) per[cat] = ap;
      const ordered_json j = {{"metric", eval_metric}, {"iou_thr", eval_iou}, {"per_class", per}, {"mAP", r.map}};
      write_output(eval_json, j.dump(2) + "\n");
    }
  });

  // stats
  SceneConfig st_scene;
  st_scene.noise = 0.05;
  ProposalConfig st_pcfg;
  std::uint64_t st_seed = 0;
  std::size_t st_scenes = 10, st_bins = 20;
  double st_pos = 0.7, st_neg = 0.3, st_range = 1.0;
  std::string st_dir = ".";
  auto* st = app.add_subcommand("stats", "IoU and regression-target histograms of positive proposals as CSV");
  add_scene_options(st, st_scene, st_seed);
  add_proposal_options(st, st_pcfg);
  st->add_option("--scenes", st_scenes, "Number of scenes")->capture_default_str();
  st->add_option("--bins", st_bins, "Histogram bins")->capture_default_str();
  st->add_option("--pos-thr", st_pos, "IoU above which a proposal is positive")->capture_default_str();
  st->add_option("--neg-thr", st_neg, "IoU below which a proposal is negative")->capture_default_str();
  st->add_option("--range", st_range, "Target histograms span [-range, range]")->capture_default_str();
  st->add_option("--output-dir", st_dir, "Directory for iou_hist.csv, dw_hist.csv, dh_hist.csv")
      ->capture_default_str();
  st->callback([&] {
    const auto runs = run_scenes(st_seed, st_scenes, st_scene, st_pcfg);
    Histogram iou_h(0.0, 1.0, st_bins);
    TargetHistograms t{Histogram(-st_range, st_range, st_bins), Histogram(-st_range, st_range, st_bins)};
    double sum_dw = 0.0, sum_dh = 0.0;
    for (const auto& r : runs) {
      const auto boxes = boxes_of(r.proposals);
      iou_h.merge(iou_histogram(boxes, r.scene.gts, st_bins, st_pos, st_neg));
      const TargetHistograms s = target_histogram(boxes, r.scene.gts, st_bins, st_range, st_pos, st_neg);
      t.dw.merge(s.dw);
      t.dh.merge(s.dh);
      sum_dw += s.mean_dw * static_cast<double>(s.samples);
      sum_dh += s.mean_dh * static_cast<double>(s.samples);
      t.samples += s.samples;
    }
    if (t.samples) {
      t.mean_dw = sum_dw / static_cast<double>(t.samples);
      t.mean_dh = sum_dh / static_cast<double>(t.samples);
    }
    fs::create_directories(st_dir);
    write_output((fs::path(st_dir) / "iou_hist.csv").string(), iou_h.to_csv());
    write_output((fs::path(st_dir) / "dw_hist.csv").string(), t.dw.to_csv());
    write_output((fs::path(st_dir) / "dh_hist.csv").string(), t.dh.to_csv());
    std::cout << "positives " << t.samples << "\n"
              << "mean_dw " << fmt(t.mean_dw, 6) << "\n"
              << "mean_dh " << fmt(t.mean_dh, 6) << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace obbkit::cli

int main(int argc, char** argv) { return obbkit::cli::run(argc, argv); }
