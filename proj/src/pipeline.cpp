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

#include "geoseg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "geoseg/fusion.hpp"
#include "geoseg/rng.hpp"

namespace geoseg {

namespace {
constexpr double kGradNormCap = 10.0;
}  // namespace

bool uses_25d(ReprMode m) {
  return m == ReprMode::k2D25D || m == ReprMode::kFull;
}
bool uses_3d(ReprMode m) {
  return m == ReprMode::k2D3D || m == ReprMode::kFull;
}

Tensor image_tensor(const ImageU8& image) {
  Tensor t({3, image.height, image.width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        t.at(c, y, x) = image.px(y, x)[c] / 255.0;
  return t;
}

BinaryGrid proposal_gt_mask(const SceneRecord& scene, const RoiBox& box,
                            int instance_id, int grid) {
  BinaryGrid gt(static_cast<size_t>(grid) * grid, 0.0);
  const int w = scene.image.width, h = scene.image.height;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      double px = box.x0 + (j + 0.5) * box.width() / grid;
      double py = box.y0 + (i + 0.5) * box.height() / grid;
      int x = std::clamp(static_cast<int>(px), 0, w - 1);
      int y = std::clamp(static_cast<int>(py), 0, h - 1);
      if (scene.instance_map[static_cast<size_t>(y) * w + x] ==
          instance_id + 1)
        gt[static_cast<size_t>(i) * grid + j] = 1.0;
    }
  return gt;
}

namespace {

// Accumulates one loss term over the proposals that contribute to it.
struct TermAcc {
  ad::Var sum;
  int n = 0;

  void add(ad::Tape& t, ad::Var v) {
    sum = n == 0 ? v : t.add(sum, v);
    ++n;
  }
  ad::Var mean(ad::Tape& t) const {
    return n > 0 ? t.scale(sum, 1.0 / n) : t.put(Tensor::scalar(0.0));
  }
  double mean_value(ad::Tape& t) const {
    return n > 0 ? t.scalar(sum) / n : 0.0;
  }
};

struct SceneTerms {
  TermAcc box, cls, mask2d, mask25d, mask3d, cont, corr, miou;
};

std::vector<double> per_point_gt(const BinaryGrid& gt,
                                 const std::vector<int>& source_index) {
  std::vector<double> out(source_index.size());
  for (size_t i = 0; i < source_index.size(); ++i)
    out[i] = gt[static_cast<size_t>(source_index[i])];
  return out;
}

ProbMask to_probmask(const Tensor& t) {
  ProbMask m(t.dim(0));
  m.p = t.data;
  return m;
}

// Forward pass for one scene's proposals; shared by train and the Laplacian
// measurement. Emits per-term accumulators on the tape.
SceneTerms scene_forward(ad::Tape& tape, const TapeModel& tm,
                         const SceneRecord& scene,
                         const std::vector<Proposal>& proposals,
                         const TrainConfig& cfg, uint64_t point_seed_base,
                         HeadCallCounts* counts) {
  const int g = cfg.model.grid;
  const int k = cfg.model.categories;
  Tensor img = image_tensor(scene.image);
  ad::Var fmap = backbone_features(tm, tape.put(img));
  SceneTerms terms;

  for (size_t pi = 0; pi < proposals.size(); ++pi) {
    const Proposal& prop = proposals[pi];
    ad::Var feat = roi_feature_map(tm, fmap, prop.box, scene.image.width,
                                   scene.image.height);
    auto [logits, deltas] = box_class(tm, feat);
    if (counts) ++counts->boxcls;
    terms.cls.add(tape, tape.softmax_ce(logits, prop.label));

    if (prop.label >= k) continue;  // background: classification only
    const InstanceGt& gt = scene.instances[prop.matched_gt];
    std::vector<double> enc = encode_box(prop.box, gt.box);
    Tensor target({4});
    target.data = enc;
    terms.box.add(tape, tape.smooth_l1_sum(
                            tape.slice(deltas, 4 * prop.label, 4), target));

    BinaryGrid gt14 = proposal_gt_mask(scene, prop.box, prop.matched_gt, g);
    ad::Var m2d = mask2d_prob(tm, feat, prop.label);
    if (counts) ++counts->mask2d;
    terms.mask2d.add(tape, mask_bce_t(tape, m2d, gt14, g));

    // Single MaskIoU head, trained on the image-domain mask only.
    double iou_target = maskiou_target(to_probmask(tape.val(m2d)), gt14);
    ad::Var score = maskiou_score(tm, feat, m2d, prop.label);
    if (counts) ++counts->maskiou;
    ad::Var err = tape.sub(score, tape.put(Tensor::scalar(iou_target)));
    terms.miou.add(tape, tape.sum_all(tape.square(err)));

    if (cfg.continuity_on_all_masks)
      terms.cont.add(tape, continuity_loss_t(tape, m2d));

    ad::Var m25{};
    if (uses_25d(cfg.repr)) {
      DisparityPatch patch = crop_roi_disparity(scene.disparity, prop.box, g);
      bool any_valid = std::any_of(patch.valid.begin(), patch.valid.end(),
                                   [](uint8_t v) { return v != 0; });
      if (any_valid) {
        ad::Var in = tape.put(
            patch_input(patch, cfg.model.standardize_disparity));
        m25 = mask25d_prob(tm, in, prop.label);
        if (counts) ++counts->mask25d;
        terms.mask25d.add(tape, mask_bce_t(tape, m25, gt14, g));
        if (cfg.continuity_on_all_masks)
          terms.cont.add(tape, continuity_loss_t(tape, m25));
      }
    }

    if (uses_3d(cfg.repr)) {
      DisparityPatch patch = crop_roi_disparity(scene.disparity, prop.box, g);
      bool any_valid = std::any_of(patch.valid.begin(), patch.valid.end(),
                                   [](uint8_t v) { return v != 0; });
      if (any_valid) {
        PointSet3D full = backproject_roi(patch);
        PointSet3D ps = sample_points(full, cfg.model.n_points,
                                      mix_seed(point_seed_base, pi));
        ad::Var pts = tape.put(
            points_input(ps, cfg.model.standardize_disparity));
        ad::Var probs = point_probs(tm, pts, prop.label);
        if (counts) ++counts->mask3d;
        terms.mask3d.add(
            tape, per_point_bce_t(tape, probs, per_point_gt(gt14,
                                                            ps.source_index)));
        auto plan = make_reproject_plan(ps.source_index, g);
        ad::Var m3 = tape.project_cells(probs, plan, g);
        terms.cont.add(tape, continuity_loss_t(tape, m3));
        if (m25.valid())
          terms.corr.add(tape, correspondence_loss_t(tape, m3, m25));
      }
    }
  }
  return terms;
}

LossReport report_from_terms(ad::Tape& tape, SceneTerms& terms,
                             const LossWeights& w) {
  LossReport r;
  r.box = terms.box.mean_value(tape);
  r.cls = terms.cls.mean_value(tape);
  r.mask2d = terms.mask2d.mean_value(tape);
  r.mask25d = terms.mask25d.mean_value(tape);
  r.mask3d = terms.mask3d.mean_value(tape);
  r.cont = terms.cont.mean_value(tape);
  r.corr = terms.corr.mean_value(tape);
  r.miou = terms.miou.mean_value(tape);
  r.total = total_loss(r, w);
  return r;
}

}  // namespace

TrainResult train(const std::vector<SceneRecord>& scenes,
                  const TrainConfig& cfg) {
  if (scenes.empty()) throw std::invalid_argument("train: empty dataset");
  TrainResult result;
  result.model = Model::init(cfg.model, cfg.seed);
  std::map<std::string, Tensor> velocity;
  for (const auto& [name, t] : result.model.params)
    velocity[name] = Tensor(t.shape);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    LossReport epoch_mean;
    for (size_t si = 0; si < scenes.size(); ++si) {
      const SceneRecord& scene = scenes[si];
      uint64_t scene_seed =
          mix_seed(cfg.seed, (static_cast<uint64_t>(epoch) << 24) | si);
      std::vector<Proposal> proposals = make_proposals(
          scene, scene_seed, cfg.proposal_jitter, cfg.negatives_per_image,
          cfg.copies_per_instance);

      ad::Tape tape;
      TapeModel tm = bind(tape, result.model);
      SceneTerms terms =
          scene_forward(tape, tm, scene, proposals, cfg,
                        mix_seed(scene_seed, 0x9e3779), &result.counts);

      LossReport report;
      try {
        report = report_from_terms(tape, terms, cfg.weights);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + " (epoch " +
                                 std::to_string(epoch) + ", scene " +
                                 std::to_string(scene.id) + ")");
      }

      // Weighted total on the tape, then one SGD-with-momentum step.
      const LossWeights& w = cfg.weights;
      ad::Var total = tape.put(Tensor::scalar(0.0));
      auto acc = [&](const TermAcc& t, double weight) {
        if (t.n > 0 && weight != 0.0)
          total = tape.add(total, tape.scale(t.mean(tape), weight));
      };
      acc(terms.box, w.w_box);
      acc(terms.cls, w.w_cls);
      acc(terms.mask2d, w.w_2dmask);
      acc(terms.mask25d, w.w_25dmask);
      acc(terms.mask3d, w.w_3dmask);
      acc(terms.cont, w.w_cont);
      acc(terms.corr, w.w_corr);
      acc(terms.miou, w.w_miou);
      tape.backward(total);

      // Global-norm gradient clipping. One oversized step early on can push
      // every ReLU in the backbone negative, after which no gradient path
      // remains and the run is dead; the cap keeps single scenes from doing
      // that.
      double grad_sq = 0.0;
      for (auto& [name, param] : result.model.params) {
        const Tensor& grad = tape.grad(tm.p.at(name));
        for (double gv : grad.data) grad_sq += gv * gv;
      }
      double clip = 1.0;
      if (grad_sq > kGradNormCap * kGradNormCap)
        clip = kGradNormCap / std::sqrt(grad_sq);

      for (auto& [name, param] : result.model.params) {
        const Tensor& grad = tape.grad(tm.p.at(name));
        Tensor& vel = velocity[name];
        if (grad.data.empty()) continue;  // unreached head this scene
        for (int i = 0; i < param.size(); ++i) {
          vel[i] = cfg.momentum * vel[i] - cfg.learning_rate * clip * grad[i];
          param[i] += vel[i];
        }
      }

      epoch_mean.box += report.box;
      epoch_mean.cls += report.cls;
      epoch_mean.mask2d += report.mask2d;
      epoch_mean.mask25d += report.mask25d;
      epoch_mean.mask3d += report.mask3d;
      epoch_mean.cont += report.cont;
      epoch_mean.corr += report.corr;
      epoch_mean.miou += report.miou;
    }
    double inv = 1.0 / scenes.size();
    epoch_mean.box *= inv;
    epoch_mean.cls *= inv;
    epoch_mean.mask2d *= inv;
    epoch_mean.mask25d *= inv;
    epoch_mean.mask3d *= inv;
    epoch_mean.cont *= inv;
    epoch_mean.corr *= inv;
    epoch_mean.miou *= inv;
    epoch_mean.total = total_loss(epoch_mean, cfg.weights);
    result.epoch_log.push_back(epoch_mean);
  }
  return result;
}

namespace {

eval::BinMask paste_to_box(const ProbMask& prob, const RoiBox& box) {
  int bw = std::max(1, static_cast<int>(std::lround(box.width())));
  int bh = std::max(1, static_cast<int>(std::lround(box.height())));
  eval::BinMask mask;
  mask.width = bw;
  mask.height = bh;
  mask.v.assign(static_cast<size_t>(bw) * bh, 0);
  int g = prob.grid;
  for (int y = 0; y < bh; ++y)
    for (int x = 0; x < bw; ++x) {
      // Bilinear resize of the probability grid, then threshold.
      double sx = (x + 0.5) * g / bw - 0.5;
      double sy = (y + 0.5) * g / bh - 0.5;
      sx = std::clamp(sx, 0.0, g - 1.0);
      sy = std::clamp(sy, 0.0, g - 1.0);
      int j0 = static_cast<int>(sx), i0 = static_cast<int>(sy);
      int j1 = std::min(j0 + 1, g - 1), i1 = std::min(i0 + 1, g - 1);
      double fx = sx - j0, fy = sy - i0;
      double v = (1 - fy) * ((1 - fx) * prob.at(i0, j0) + fx * prob.at(i0, j1)) +
                 fy * ((1 - fx) * prob.at(i1, j0) + fx * prob.at(i1, j1));
      if (v >= 0.5) mask.v[static_cast<size_t>(y) * bw + x] = 1;
    }
  return mask;
}

}  // namespace

std::vector<eval::Detection> infer(const SceneRecord& scene,
                                   const Model& model,
                                   const InferConfig& cfg,
                                   HeadCallCounts* counts,
                                   InferDebug* debug) {
  const int g = model.cfg.grid;
  const int k = model.cfg.categories;
  std::vector<eval::Detection> dets;
  if (scene.instances.empty()) return dets;

  std::vector<Proposal> proposals =
      make_proposals(scene, cfg.seed, cfg.proposal_jitter,
                     cfg.negatives_per_image, cfg.copies_per_instance);

  ad::Tape tape;
  TapeModel tm = bind(tape, model);
  ad::Var fmap = backbone_features(tm, tape.put(image_tensor(scene.image)));

  for (size_t pi = 0; pi < proposals.size(); ++pi) {
    const Proposal& prop = proposals[pi];
    ad::Var feat0 = roi_feature_map(tm, fmap, prop.box, scene.image.width,
                                    scene.image.height);
    auto [logits_v, deltas_v] = box_class(tm, feat0);
    if (counts) ++counts->boxcls;
    const Tensor& logits = tape.val(logits_v);
    const Tensor& deltas = tape.val(deltas_v);

    int best = static_cast<int>(std::max_element(logits.data.begin(),
                                                 logits.data.end()) -
                                logits.data.begin());
    if (best >= k) continue;  // background
    double mx = *std::max_element(logits.data.begin(), logits.data.end());
    double denom = 0.0;
    for (double v : logits.data) denom += std::exp(v - mx);
    double box_score = std::exp(logits[best] - mx) / denom;
    if (box_score < cfg.box_score_floor) continue;

    RoiBox refined = decode_box(prop.box, deltas.data.data() + 4 * best)
                         .clipped(scene.image.width, scene.image.height);
    if (refined.area() <= 0.0) continue;

    ad::Var feat = roi_feature_map(tm, fmap, refined, scene.image.width,
                                   scene.image.height);
    ad::Var m2d_v = mask2d_prob(tm, feat, best);
    if (counts) ++counts->mask2d;
    ProbMask m2d = to_probmask(tape.val(m2d_v));
    ScoredMask s2d{m2d, tape.scalar(maskiou_score(tm, feat, m2d_v, best))};
    if (counts) ++counts->maskiou;

    ScoredMask fused = s2d;
    DisparityPatch patch;
    bool have_patch = false;
    if (uses_25d(cfg.repr) || uses_3d(cfg.repr)) {
      patch = crop_roi_disparity(scene.disparity, refined, g);
      have_patch = std::any_of(patch.valid.begin(), patch.valid.end(),
                               [](uint8_t v) { return v != 0; });
    }

    ScoredMask s25, s3;
    bool got25 = false, got3 = false;
    if (uses_25d(cfg.repr) && have_patch) {
      ad::Var in =
          tape.put(patch_input(patch, model.cfg.standardize_disparity));
      ad::Var m25_v = mask25d_prob(tm, in, best);
      if (counts) ++counts->mask25d;
      s25.mask = to_probmask(tape.val(m25_v));
      ad::Var mg = tape.put([&] {
        Tensor t({g, g});
        t.data = s25.mask.p;
        return t;
      }());
      s25.score = tape.scalar(maskiou_score(tm, feat, mg, best));
      if (counts) ++counts->maskiou;
      got25 = true;
    }
    if (uses_3d(cfg.repr) && have_patch) {
      PointSet3D ps = sample_points(backproject_roi(patch), model.cfg.n_points,
                                    mix_seed(cfg.seed, 0x51ced00 + pi));
      ad::Var pts =
          tape.put(points_input(ps, model.cfg.standardize_disparity));
      ad::Var probs = point_probs(tm, pts, best);
      if (counts) ++counts->mask3d;
      s3.mask = reproject_points(ps, tape.val(probs).data, g);
      ad::Var mg = tape.put([&] {
        Tensor t({g, g});
        t.data = s3.mask.p;
        return t;
      }());
      s3.score = tape.scalar(maskiou_score(tm, feat, mg, best));
      if (counts) ++counts->maskiou;
      got3 = true;
    }

    if (got25 && got3)
      fused = fuse_all(s2d, s25, s3);
    else if (got25)
      fused = fuse_pair(s2d, s25);
    else if (got3)
      fused = fuse_pair(s2d, s3);

    if (debug) {
      debug->m2d.push_back(s2d);
      debug->fused.push_back(fused);
    }

    eval::Detection det;
    det.box = refined;
    det.category = best;
    det.box_score = box_score;
    det.mask = paste_to_box(fused.mask, refined);
    det.mask_score = fused.score;
    det.image_id = scene.id;
    det.id = static_cast<int>(dets.size());
    dets.push_back(std::move(det));
  }
  return dets;
}

std::vector<eval::GroundTruth> scene_ground_truth(const SceneRecord& scene) {
  std::vector<eval::GroundTruth> gts;
  const int w = scene.image.width, h = scene.image.height;
  for (size_t gi = 0; gi < scene.instances.size(); ++gi) {
    eval::GroundTruth gt;
    gt.box = scene.instances[gi].box;
    gt.category = scene.instances[gi].category;
    gt.image_id = scene.id;
    gt.mask.width = w;
    gt.mask.height = h;
    gt.mask.v.assign(static_cast<size_t>(w) * h, 0);
    for (size_t q = 0; q < gt.mask.v.size(); ++q)
      gt.mask.v[q] = scene.instance_map[q] == gi + 1 ? 1 : 0;
    gts.push_back(std::move(gt));
  }
  return gts;
}

double mean_mask3d_laplacian(const std::vector<SceneRecord>& scenes,
                             const Model& model, uint64_t seed) {
  double sum = 0.0;
  int n = 0;
  for (const SceneRecord& scene : scenes) {
    std::vector<Proposal> proposals = make_proposals(scene, seed);
    for (size_t pi = 0; pi < proposals.size(); ++pi) {
      const Proposal& prop = proposals[pi];
      if (prop.label >= model.cfg.categories) continue;
      DisparityPatch patch =
          crop_roi_disparity(scene.disparity, prop.box, model.cfg.grid);
      if (std::none_of(patch.valid.begin(), patch.valid.end(),
                       [](uint8_t v) { return v != 0; }))
        continue;
      PointSet3D ps = sample_points(backproject_roi(patch), model.cfg.n_points,
                                    mix_seed(seed, pi));
      auto [probs, mask] = predict_mask_3d(ps, prop.label, model);
      sum += continuity_loss(mask);
      ++n;
    }
  }
  return n > 0 ? sum / n : 0.0;
}

}  // namespace geoseg
