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

#include "geoseg/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "geoseg/models.hpp"

namespace geoseg {

namespace {

Tensor grid_tensor(const ProbMask& m) {
  Tensor t({m.grid, m.grid});
  t.data = m.p;
  return t;
}

Tensor grid_tensor(const BinaryGrid& g, int grid) {
  if (static_cast<int>(g.size()) != grid * grid)
    throw std::invalid_argument("mask shape mismatch");
  Tensor t({grid, grid});
  t.data = g;
  return t;
}

void check_finite(double v, const char* term) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("non-finite loss term: ") + term);
}

}  // namespace

ad::Var mask_bce_t(ad::Tape& t, ad::Var pred, const BinaryGrid& gt, int grid) {
  return t.bce_mean(pred, grid_tensor(gt, grid), kLogEps);
}

ad::Var per_point_bce_t(ad::Tape& t, ad::Var per_point_probs,
                        const std::vector<double>& per_point_gt) {
  Tensor target({static_cast<int>(per_point_gt.size())});
  target.data = per_point_gt;
  return t.bce_mean(per_point_probs, target, kLogEps);
}

ad::Var continuity_loss_t(ad::Tape& t, ad::Var mask) {
  return t.laplacian_energy(mask);
}

ad::Var correspondence_loss_t(ad::Tape& t, ad::Var m3, ad::Var m25) {
  return t.symmetric_ce_mean(m3, m25, kLogEps);
}

double mask_bce(const ProbMask& pred, const BinaryGrid& gt) {
  ad::Tape t;
  return t.scalar(mask_bce_t(t, t.put(grid_tensor(pred)), gt, pred.grid));
}

double continuity_loss(const ProbMask& m) {
  ad::Tape t;
  return t.scalar(continuity_loss_t(t, t.put(grid_tensor(m))));
}

double correspondence_loss(const ProbMask& m3, const ProbMask& m25) {
  if (m3.grid != m25.grid)
    throw std::invalid_argument("mask shape mismatch");
  ad::Tape t;
  return t.scalar(correspondence_loss_t(t, t.put(grid_tensor(m3)),
                                        t.put(grid_tensor(m25))));
}

double maskiou_target(const ProbMask& pred_mask, const BinaryGrid& gt) {
  if (static_cast<int>(gt.size()) != pred_mask.grid * pred_mask.grid)
    throw std::invalid_argument("mask shape mismatch");
  int inter = 0, uni = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    bool p = pred_mask.p[i] >= 0.5;
    bool g = gt[i] >= 0.5;
    inter += (p && g) ? 1 : 0;
    uni += (p || g) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

double maskiou_loss(double predicted, const ProbMask& pred_mask,
                    const BinaryGrid& gt) {
  double target = maskiou_target(pred_mask, gt);
  double e = predicted - target;
  return e * e;
}

std::pair<double, double> detection_losses(const std::vector<double>& logits,
                                           const std::vector<double>& deltas,
                                           int gt_category, int n_categories,
                                           const RoiBox& gt_box,
                                           const RoiBox& proposal) {
  if (static_cast<int>(logits.size()) != n_categories + 1)
    throw std::invalid_argument("logit count mismatch");
  ad::Tape t;
  Tensor lt({n_categories + 1});
  lt.data = logits;
  double l_cls = t.scalar(t.softmax_ce(t.put(lt), gt_category));
  double l_box = 0.0;
  if (gt_category < n_categories) {  // background proposals carry no box loss
    std::vector<double> target = encode_box(proposal, gt_box);
    Tensor pred({4}), tgt({4});
    for (int i = 0; i < 4; ++i) {
      pred[i] = deltas.at(static_cast<size_t>(4) * gt_category + i);
      tgt[i] = target[i];
    }
    l_box = t.scalar(t.smooth_l1_sum(t.put(pred), tgt));
  }
  return {l_cls, l_box};
}

double total_loss(const LossReport& terms, const LossWeights& w) {
  check_finite(terms.box, "box");
  check_finite(terms.cls, "cls");
  check_finite(terms.mask2d, "mask2d");
  check_finite(terms.mask25d, "mask25d");
  check_finite(terms.mask3d, "mask3d");
  check_finite(terms.cont, "cont");
  check_finite(terms.corr, "corr");
  check_finite(terms.miou, "miou");
  return w.w_box * terms.box + w.w_cls * terms.cls +
         w.w_2dmask * terms.mask2d + w.w_25dmask * terms.mask25d +
         w.w_3dmask * terms.mask3d + w.w_cont * terms.cont +
         w.w_corr * terms.corr + w.w_miou * terms.miou;
}

}  // namespace geoseg
