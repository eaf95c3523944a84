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

#pragma once

#include <string>
#include <vector>

#include "geoseg/autodiff.hpp"
#include "geoseg/geometry.hpp"

namespace geoseg {

constexpr double kLogEps = 1e-7;

struct LossWeights {
  double w_box = 1.0;
  double w_cls = 1.0;
  double w_2dmask = 1.0;
  double w_25dmask = 1.0;
  double w_3dmask = 1.0;
  double w_cont = 1.0;
  double w_corr = 1.0;
  double w_miou = 1.0;
};

struct LossReport {
  double box = 0, cls = 0, mask2d = 0, mask25d = 0, mask3d = 0;
  double cont = 0, corr = 0, miou = 0;
  double total = 0;
};

/// Binary mask on the head grid; values 0/1.
using BinaryGrid = std::vector<double>;

// Scalar (double-level) losses. Each has a tape-level counterpart used by the
// trainer; the scalar versions delegate to the same tape ops so both paths
// share one definition.

double mask_bce(const ProbMask& pred, const BinaryGrid& gt);
double continuity_loss(const ProbMask& m);
double correspondence_loss(const ProbMask& m3, const ProbMask& m25);
double maskiou_loss(double predicted, const ProbMask& pred_mask,
                    const BinaryGrid& gt);
/// IoU between binarize(pred, 0.5) and gt on the grid; both empty -> 1.
double maskiou_target(const ProbMask& pred_mask, const BinaryGrid& gt);
/// (L_cls, L_box). gt_category: 0..K-1 foreground, K = background.
std::pair<double, double> detection_losses(const std::vector<double>& logits,
                                           const std::vector<double>& deltas,
                                           int gt_category, int n_categories,
                                           const RoiBox& gt_box,
                                           const RoiBox& proposal);
double total_loss(const LossReport& terms, const LossWeights& w);

// Tape-level building blocks for training.
ad::Var mask_bce_t(ad::Tape& t, ad::Var pred, const BinaryGrid& gt,
                   int grid);
ad::Var per_point_bce_t(ad::Tape& t, ad::Var per_point_probs,
                        const std::vector<double>& per_point_gt);
ad::Var continuity_loss_t(ad::Tape& t, ad::Var mask);
ad::Var correspondence_loss_t(ad::Tape& t, ad::Var m3, ad::Var m25);

}  // namespace geoseg
