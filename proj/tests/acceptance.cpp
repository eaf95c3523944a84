// Copyright 2026 The geoseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Acceptance gate: one pass/fail line per top-level claim. Exit code is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "geoseg/data.hpp"
#include "geoseg/eval.hpp"
#include "geoseg/fusion.hpp"
#include "geoseg/geometry.hpp"
#include "geoseg/losses.hpp"
#include "geoseg/models.hpp"
#include "geoseg/pipeline.hpp"
#include "geoseg/rng.hpp"
#include "gradcheck.hpp"

namespace geoseg {
namespace {

namespace fs = std::filesystem;
using test::gradcheck;

int g_failures = 0;

void report(bool ok, const std::string& what) {
  std::cout << (ok ? "[PASS] " : "[FAIL] ") << what << std::endl;
  if (!ok) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// --- 1. stereo geometry ------------------------------------------------

void check_stereo_ranges() {
  struct Case {
    StereoRig rig;
    double expect_m;
  };
  const Case cases[] = {
      {{3300.0, 0.5}, 1650.0}, {{2200.0, 0.2}, 440.0}, {{700.0, 0.5}, 350.0}};
  bool ok = true;
  for (const Case& c : cases) {
    double z = disparity_to_depth(1.0, c.rig);
    if (std::abs(z - c.expect_m) > 1e-9) ok = false;
    // Round trip at several depths.
    for (double depth : {5.0, 17.3, 60.0, c.expect_m}) {
      double back = disparity_to_depth(depth_to_disparity(depth, c.rig), c.rig);
      if (std::abs(back - depth) > 1e-9 * depth) ok = false;
    }
  }
  report(ok,
         "stereo rigs resolve 1650 m / 440 m / 350 m at 1 px disparity, and "
         "depth round trips are exact");
}

// --- 2. gradients -------------------------------------------------------

void check_gradients() {
  auto t0 = std::chrono::steady_clock::now();
  constexpr int kTrials = 20;
  constexpr double kTol = 1e-4;
  bool ok = true;

  ModelConfig cfg;
  cfg.channels = 4;
  cfg.grid = 8;
  cfg.categories = 3;
  cfg.n_points = 8;
  const int g = cfg.grid;

  Rng rng(99);
  auto rand_tensor = [&](std::vector<int> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
  };

  for (int trial = 0; trial < kTrials && ok; ++trial) {
    Model model = Model::init(cfg, 1000 + trial);

    // Losses.
    BinaryGrid gt(static_cast<size_t>(g) * g);
    for (double& v : gt) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    ok = ok && gradcheck(rand_tensor({g, g}, 0.05, 0.95),
                         [&](ad::Tape& t, ad::Var v) {
                           return mask_bce_t(t, v, gt, g);
                         }) < kTol;
    std::vector<double> pgt(8);
    for (double& v : pgt) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    ok = ok && gradcheck(rand_tensor({8}, 0.05, 0.95),
                         [&](ad::Tape& t, ad::Var v) {
                           return per_point_bce_t(t, v, pgt);
                         }) < kTol;
    ok = ok && gradcheck(rand_tensor({g, g}, 0.05, 0.95),
                         [&](ad::Tape& t, ad::Var v) {
                           return continuity_loss_t(t, v);
                         }) < kTol;
    Tensor other = rand_tensor({g, g}, 0.05, 0.95);
    ok = ok && gradcheck(rand_tensor({g, g}, 0.05, 0.95),
                         [&](ad::Tape& t, ad::Var v) {
                           return correspondence_loss_t(t, v, t.put(other));
                         }) < kTol;
    ok = ok && gradcheck(rand_tensor({g, g}, 0.05, 0.95),
                         [&](ad::Tape& t, ad::Var v) {
                           return correspondence_loss_t(t, t.put(other), v);
                         }) < kTol;

    // Heads.
    int cat = rng.uniform_int(cfg.categories);
    ok = ok && gradcheck(rand_tensor({3, 6, 8}, 0.0, 1.0),
                         [&](ad::Tape& t, ad::Var v) {
                           TapeModel tm = bind(t, model);
                           return t.sum_all(t.square(backbone_features(tm, v)));
                         }) < kTol;
    ok = ok && gradcheck(rand_tensor({cfg.channels, g, g}, -1.0, 1.0),
                         [&](ad::Tape& t, ad::Var v) {
                           TapeModel tm = bind(t, model);
                           return t.sum_all(t.square(mask2d_prob(tm, v, cat)));
                         }) < kTol;
    ok = ok && gradcheck(rand_tensor({1, g, g}, -1.0, 1.0),
                         [&](ad::Tape& t, ad::Var v) {
                           TapeModel tm = bind(t, model);
                           return t.sum_all(t.square(mask25d_prob(tm, v, cat)));
                         }) < kTol;
    ok = ok && gradcheck(rand_tensor({cfg.n_points, 3}, -1.0, 1.0),
                         [&](ad::Tape& t, ad::Var v) {
                           TapeModel tm = bind(t, model);
                           return t.sum_all(t.square(point_probs(tm, v, cat)));
                         }) < kTol;
    Tensor feat = rand_tensor({cfg.channels, g, g}, -1.0, 1.0);
    ok = ok && gradcheck(rand_tensor({g, g}, 0.0, 1.0),
                         [&](ad::Tape& t, ad::Var v) {
                           TapeModel tm = bind(t, model);
                           return maskiou_score(tm, t.put(feat), v, cat);
                         }) < kTol;
    ok = ok && gradcheck(rand_tensor({cfg.channels, g, g}, -1.0, 1.0),
                         [&](ad::Tape& t, ad::Var v) {
                           TapeModel tm = bind(t, model);
                           auto [logits, deltas] = box_class(tm, v);
                           return t.add(t.sum_all(t.square(logits)),
                                        t.sum_all(t.square(deltas)));
                         }) < kTol;
  }

  double elapsed = seconds_since(t0);
  report(ok && elapsed < 120.0,
         "finite-difference gradient checks pass for every loss and head "
         "over 20 random instances each (" +
             std::to_string(elapsed).substr(0, 5) + " s)");
}

// --- 3. fusion algebra --------------------------------------------------

ProbMask fill_mask(int g, std::vector<double> v) {
  ProbMask m(g);
  m.p = std::move(v);
  return m;
}

void check_fusion() {
  bool ok = true;

  // Hand case: scores 0.7 and 0.5 weight the cells 7/12 and 5/12.
  {
    ScoredMask a{fill_mask(2, {1.0, 0.0, 0.4, 0.6}), 0.7};
    ScoredMask b{fill_mask(2, {0.0, 1.0, 0.8, 0.2}), 0.5};
    ScoredMask f = fuse_pair(a, b);
    double wa = 0.7 / 1.2, wb = 0.5 / 1.2;
    for (int i = 0; i < 4; ++i)
      if (std::abs(f.mask.p[i] - (wa * a.mask.p[i] + wb * b.mask.p[i])) >
          1e-12)
        ok = false;
    if (std::abs(f.score - (wa * 0.7 + wb * 0.5)) > 1e-12) ok = false;
  }

  // Hand case: three-way fusion runs disparity-side first, image-side last.
  {
    ScoredMask m2{fill_mask(1, {0.9}), 0.8};
    ScoredMask m25{fill_mask(1, {0.3}), 0.5};
    ScoredMask m3{fill_mask(1, {0.6}), 0.7};
    ScoredMask f = fuse_all(m2, m25, m3);
    double wd25 = 0.5 / 1.2, wd3 = 0.7 / 1.2;
    double pd = wd25 * 0.3 + wd3 * 0.6;
    double sd = wd25 * 0.5 + wd3 * 0.7;
    double w2 = 0.8 / (0.8 + sd), wd = sd / (0.8 + sd);
    if (std::abs(f.mask.p[0] - (w2 * 0.9 + wd * pd)) > 1e-12) ok = false;
    if (std::abs(f.score - (w2 * 0.8 + wd * sd)) > 1e-12) ok = false;
  }

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    ScoredMask a{ProbMask(3), rng.uniform(0.05, 1.0)};
    ScoredMask b{ProbMask(3), rng.uniform(0.05, 1.0)};
    for (double& v : a.mask.p) v = rng.uniform();
    for (double& v : b.mask.p) v = rng.uniform();

    ScoredMask f = fuse_pair(a, b);
    for (int i = 0; i < 9; ++i) {
      double lo = std::min(a.mask.p[i], b.mask.p[i]);
      double hi = std::max(a.mask.p[i], b.mask.p[i]);
      // Convexity: fused cells stay inside the input range.
      if (f.mask.p[i] < lo - 1e-12 || f.mask.p[i] > hi + 1e-12) ok = false;
    }

    // Symmetry.
    ScoredMask fr = fuse_pair(b, a);
    for (int i = 0; i < 9; ++i)
      if (std::abs(f.mask.p[i] - fr.mask.p[i]) > 1e-12) ok = false;

    // Scale invariance of the weights.
    ScoredMask as = a, bs = b;
    as.score *= 3.5;
    bs.score *= 3.5;
    ScoredMask fsc = fuse_pair(as, bs);
    for (int i = 0; i < 9; ++i)
      if (std::abs(f.mask.p[i] - fsc.mask.p[i]) > 1e-12) ok = false;

    // Zero scores fall back to an unweighted average.
    ScoredMask az = a, bz = b;
    az.score = bz.score = 0.0;
    ScoredMask fz = fuse_pair(az, bz);
    for (int i = 0; i < 9; ++i)
      if (std::abs(fz.mask.p[i] - 0.5 * (a.mask.p[i] + b.mask.p[i])) > 1e-12)
        ok = false;
  }

  report(ok,
         "score-weighted fusion matches hand-computed cases to 1e-12 and is "
         "convex, symmetric, and scale invariant");
}

// --- 4. continuity energy -----------------------------------------------

void check_continuity() {
  bool ok = true;

  for (double c : {0.0, 0.25, 0.5, 1.0}) {
    ProbMask m(6, c);
    if (continuity_loss(m) != 0.0) ok = false;
  }

  // Center spike on a zero grid: (4*1)^2 at the spike plus 4*(1)^2 around it.
  ProbMask spike(5);
  spike.at(2, 2) = 1.0;
  if (std::abs(continuity_loss(spike) - 20.0) > 1e-12) ok = false;

  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    ProbMask m(4);
    for (double& v : m.p) v = rng.uniform();
    bool constant = true;
    for (double v : m.p)
      if (v != m.p[0]) constant = false;
    double e = continuity_loss(m);
    if (constant ? e != 0.0 : e <= 0.0) ok = false;
  }

  report(ok,
         "continuity energy is zero exactly on constant masks and a unit "
         "center spike scores 20");
}

// --- 5. round trips -----------------------------------------------------

bool dirs_byte_equal(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (const fs::path& rel : fa) {
    std::ifstream s1(a / rel, std::ios::binary), s2(b / rel, std::ios::binary);
    std::string d1((std::istreambuf_iterator<char>(s1)), {});
    std::string d2((std::istreambuf_iterator<char>(s2)), {});
    if (d1 != d2) return false;
  }
  return true;
}

void check_round_trips() {
  bool ok = true;

  // Backprojection / reprojection: per-point disparities land back in their
  // cells exactly.
  DisparityPatch patch;
  patch.grid = 4;
  patch.values.resize(16);
  patch.valid.assign(16, 1);
  Rng rng(3);
  for (double& v : patch.values) v = rng.uniform(2.0, 40.0);
  PointSet3D ps = backproject_roi(patch);
  ProbMask back = reproject_points(ps, ps.d, 4);
  for (int i = 0; i < 16; ++i)
    if (back.p[i] != patch.values[i]) ok = false;

  // Dataset write -> read -> write is byte-identical.
  fs::path tmp = fs::temp_directory_path() / "geoseg_accept_roundtrip";
  fs::remove_all(tmp);
  SceneConfig sc = SceneConfig::with_size(96, 48);
  std::vector<SceneRecord> scenes;
  for (int i = 0; i < 3; ++i) scenes.push_back(generate_scene(sc, 500 + i));
  write_dataset(scenes, (tmp / "a").string());
  std::vector<SceneRecord> reread = read_dataset((tmp / "a").string());
  write_dataset(reread, (tmp / "b").string());
  if (!dirs_byte_equal(tmp / "a", tmp / "b")) ok = false;

  // Checkpoint save / load is bit-exact.
  ModelConfig mc;
  mc.channels = 6;
  mc.n_points = 32;
  Model m = Model::init(mc, 77);
  m.save((tmp / "ckpt.bin").string());
  Model m2 = Model::load((tmp / "ckpt.bin").string());
  if (m2.params.size() != m.params.size()) ok = false;
  for (const auto& [name, t] : m.params) {
    const Tensor& t2 = m2.params.at(name);
    if (t2.shape != t.shape) ok = false;
    for (int i = 0; i < t.size() && ok; ++i)
      if (t2[i] != t[i]) ok = false;
  }
  fs::remove_all(tmp);

  report(ok,
         "round trips are lossless: point back/reprojection, dataset "
         "serialization, and model checkpoints");
}

// --- 6. AP evaluator vs brute-force oracle -------------------------------

constexpr int kW = 8, kH = 8;

double oracle_ap_cat_thr(const std::vector<eval::Detection>& dets,
                         const std::vector<eval::GroundTruth>& gts, int cat,
                         double thr) {
  int n_pos = 0;
  for (const auto& g : gts)
    if (g.category == cat) ++n_pos;

  std::vector<int> order;
  for (size_t i = 0; i < dets.size(); ++i)
    if (dets[i].category == cat) order.push_back(static_cast<int>(i));
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    double sa = eval::ranking_score(dets[a]), sb = eval::ranking_score(dets[b]);
    if (sa != sb) return sa > sb;
    return dets[a].id < dets[b].id;
  });

  std::set<size_t> used;
  std::vector<int> tp_flags;
  for (int di : order) {
    eval::BinMask pasted = eval::paste_mask(dets[di].mask, dets[di].box, kW, kH);
    int best = -1;
    double best_iou = 0.0;
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (gts[gi].category != cat || gts[gi].image_id != dets[di].image_id ||
          used.count(gi))
        continue;
      double iou = eval::mask_iou(pasted, gts[gi].mask);
      if (iou < thr) continue;
      if (best < 0 || iou > best_iou) {
        best = static_cast<int>(gi);
        best_iou = iou;
      }
    }
    if (best >= 0) used.insert(best);
    tp_flags.push_back(best >= 0 ? 1 : 0);
  }

  double total = 0.0;
  for (int ri = 0; ri <= 100; ++ri) {
    double r = ri / 100.0;
    double best_p = 0.0;
    int tp = 0;
    for (size_t k = 0; k < tp_flags.size(); ++k) {
      tp += tp_flags[k];
      double recall = n_pos > 0 ? double(tp) / n_pos : 0.0;
      double precision = double(tp) / double(k + 1);
      if (recall >= r - 1e-15) best_p = std::max(best_p, precision);
    }
    total += best_p;
  }
  return total / 101.0;
}

double oracle_ap(const std::vector<eval::Detection>& dets,
                 const std::vector<eval::GroundTruth>& gts) {
  std::set<int> cats;
  for (const auto& g : gts) cats.insert(g.category);
  double total = 0.0;
  for (int cat : cats) {
    double cat_total = 0.0;
    int n_thr = 0;
    for (int t = 50; t <= 95; t += 5) {
      cat_total += oracle_ap_cat_thr(dets, gts, cat, t / 100.0);
      ++n_thr;
    }
    total += cat_total / n_thr;
  }
  return 100.0 * total / cats.size();
}

void check_ap_oracle() {
  Rng rng(7);
  bool ok = true;
  for (int trial = 0; trial < 100 && ok; ++trial) {
    int n_gts = 1 + rng.uniform_int(3);
    int n_dets = rng.uniform_int(6);
    int n_images = 1 + rng.uniform_int(2);

    auto random_cells = [&]() {
      std::set<int> cells;
      int count = 1 + rng.uniform_int(12);
      for (int i = 0; i < count; ++i) cells.insert(rng.uniform_int(kW * kH));
      return cells;
    };

    std::vector<eval::GroundTruth> gts;
    for (int i = 0; i < n_gts; ++i) {
      eval::GroundTruth g;
      g.mask.width = kW;
      g.mask.height = kH;
      g.mask.v.assign(kW * kH, 0);
      for (int c : random_cells()) g.mask.v[c] = 1;
      g.category = rng.uniform_int(2);
      g.image_id = rng.uniform_int(n_images);
      g.box = {0, 0, kW, kH};
      gts.push_back(std::move(g));
    }

    std::vector<eval::Detection> dets;
    for (int i = 0; i < n_dets; ++i) {
      eval::Detection d;
      d.box = {0, 0, kW, kH};
      d.mask.width = kW;
      d.mask.height = kH;
      d.mask.v.assign(kW * kH, 0);
      if (!gts.empty() && rng.uniform() < 0.5) {
        const eval::GroundTruth& src = gts[rng.uniform_int(n_gts)];
        d.mask.v = src.mask.v;
        for (int flips = rng.uniform_int(4); flips > 0; --flips) {
          int c = rng.uniform_int(kW * kH);
          d.mask.v[c] = d.mask.v[c] ? 0 : 1;
        }
      } else {
        for (int c : random_cells()) d.mask.v[c] = 1;
      }
      d.category = rng.uniform_int(2);
      d.image_id = rng.uniform_int(n_images);
      d.box_score = rng.uniform(0.1, 1.0);
      d.mask_score = rng.uniform(0.1, 1.0);
      d.id = i;
      dets.push_back(std::move(d));
    }

    eval::EvalResult r = eval::coco_ap(dets, gts, kW, kH);
    if (std::abs(r.ap - oracle_ap(dets, gts)) > 1e-9) ok = false;
  }
  report(ok,
         "COCO-style AP matches an independent brute-force oracle on 100 "
         "random cases");
}

// --- 7. end-to-end: geometry-aware fusion beats the image-only arm -------

double eval_ap(const std::vector<SceneRecord>& scenes, const Model& model,
               ReprMode repr) {
  InferConfig icfg;
  icfg.repr = repr;
  std::vector<eval::Detection> dets;
  std::vector<eval::GroundTruth> gts;
  for (const SceneRecord& s : scenes) {
    for (eval::Detection d : infer(s, model, icfg)) {
      d.id = static_cast<int>(dets.size());
      dets.push_back(std::move(d));
    }
    for (auto& g : scene_ground_truth(s)) gts.push_back(std::move(g));
  }
  return eval::coco_ap(dets, gts, scenes.front().image.width,
                       scenes.front().image.height)
      .ap;
}

TrainConfig e2e_train_config(uint64_t seed, ReprMode repr) {
  TrainConfig tc;
  tc.epochs = 5;
  tc.seed = seed;
  tc.repr = repr;
  tc.model.channels = 8;
  tc.model.n_points = 128;
  return tc;
}

void check_end_to_end() {
  auto t0 = std::chrono::steady_clock::now();

  SceneConfig sc = SceneConfig::with_size(128, 64);
  sc.overlap_prob = 0.7;
  std::vector<SceneRecord> train_scenes, test_scenes;
  for (int i = 0; i < 200; ++i)
    train_scenes.push_back(generate_scene(sc, 10000 + i));
  for (int i = 0; i < 50; ++i)
    test_scenes.push_back(generate_scene(sc, 90000 + i));

  std::vector<double> fused_aps, flat_aps, gains;
  for (uint64_t seed : {1, 2, 3}) {
    TrainResult full =
        train(train_scenes, e2e_train_config(seed, ReprMode::kFull));
    TrainResult flat =
        train(train_scenes, e2e_train_config(seed, ReprMode::k2D));
    double ap_full = eval_ap(test_scenes, full.model, ReprMode::kFull);
    double ap_flat = eval_ap(test_scenes, flat.model, ReprMode::k2D);
    std::printf("       seed %llu: fused mask AP %.1f vs image-only %.1f\n",
                static_cast<unsigned long long>(seed), ap_full, ap_flat);
    fused_aps.push_back(ap_full);
    flat_aps.push_back(ap_flat);
    gains.push_back(ap_full - ap_flat);
  }
  std::sort(fused_aps.begin(), fused_aps.end());
  std::sort(flat_aps.begin(), flat_aps.end());
  std::sort(gains.begin(), gains.end());
  // Median over seeds: fused must match or beat the baseline, and the
  // median per-seed improvement must be strictly positive.
  bool ok = fused_aps[1] >= flat_aps[1] && gains[1] > 0.0;

  double elapsed = seconds_since(t0);
  if (elapsed >= 900.0) ok = false;
  report(ok,
         "fused three-representation model beats the image-only arm on "
         "median mask AP over 3 seeds with positive median gain (" +
             std::to_string(elapsed).substr(0, 5) + " s)");
}

// --- 8. continuity ablation ----------------------------------------------

void check_continuity_ablation() {
  SceneConfig sc = SceneConfig::with_size(128, 64);
  sc.overlap_prob = 0.7;
  std::vector<SceneRecord> train_scenes, test_scenes;
  for (int i = 0; i < 60; ++i)
    train_scenes.push_back(generate_scene(sc, 20000 + i));
  for (int i = 0; i < 20; ++i)
    test_scenes.push_back(generate_scene(sc, 95000 + i));

  std::vector<double> diffs;
  for (uint64_t seed : {1, 2, 3}) {
    TrainConfig tc = e2e_train_config(seed, ReprMode::k2D3D);
    tc.epochs = 4;
    tc.weights.w_cont = 1.0;
    TrainResult with_cont = train(train_scenes, tc);
    tc.weights.w_cont = 0.0;
    TrainResult without = train(train_scenes, tc);
    double e_with =
        mean_mask3d_laplacian(test_scenes, with_cont.model, 7);
    double e_without = mean_mask3d_laplacian(test_scenes, without.model, 7);
    std::printf("       seed %llu: 3d mask energy %.4f with vs %.4f without\n",
                static_cast<unsigned long long>(seed), e_with, e_without);
    diffs.push_back(e_without - e_with);
  }
  std::sort(diffs.begin(), diffs.end());
  report(diffs[1] > 0.0,
         "training with the continuity term lowers held-out 3d mask "
         "Laplacian energy (median of 3 seeds)");
}

}  // namespace
}  // namespace geoseg

int main() {
  using namespace geoseg;
  check_stereo_ranges();
  check_gradients();
  check_fusion();
  check_continuity();
  check_round_trips();
  check_ap_oracle();
  check_end_to_end();
  check_continuity_ablation();
  std::cout << (g_failures == 0 ? "all criteria passed"
                                : std::to_string(g_failures) +
                                      " criteria failed")
            << std::endl;
  return g_failures;
}
