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

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "geoseg/autodiff.hpp"
#include "geoseg/geometry.hpp"
#include "geoseg/tensor.hpp"

namespace geoseg {

struct ModelConfig {
  int channels = 32;      // backbone / head feature channels
  int grid = 14;          // mask grid size
  int categories = 3;     // K foreground categories
  int n_points = 1024;    // point-head input size
  bool standardize_disparity = true;
};

/// Feature grid cropped for one proposal: channels x grid x grid.
struct RoiFeature {
  Tensor grid;  // [C, G, G]
  RoiBox source_box;
};

/// Named parameter tensors plus the seed they were initialized from.
struct Model {
  ModelConfig cfg;
  uint64_t init_seed = 0;
  std::map<std::string, Tensor> params;

  static Model init(const ModelConfig& cfg, uint64_t seed);

  void save(const std::string& path) const;
  static Model load(const std::string& path);
};

/// Model parameters registered on a tape, for training / gradient checks.
struct TapeModel {
  const Model* model = nullptr;
  ad::Tape* tape = nullptr;
  std::map<std::string, ad::Var> p;

  ad::Var v(const std::string& name) const;
};

TapeModel bind(ad::Tape& tape, const Model& model);

// --- tape-level forward passes (training path) ---

/// Full-image backbone: [3,H,W] -> [C,H/2,W/2]. Three 3x3 convs, first one
/// strided, ReLU between.
ad::Var backbone_features(const TapeModel& tm, ad::Var image);

/// Crop-resize a backbone feature map to [C,G,G] for a box given in image
/// pixels (the map is at half resolution).
ad::Var roi_feature_map(const TapeModel& tm, ad::Var fmap, const RoiBox& box,
                        int image_w, int image_h);

ad::Var mask2d_prob(const TapeModel& tm, ad::Var feat, int category);
ad::Var mask25d_prob(const TapeModel& tm, ad::Var patch_input, int category);
/// Per-point probabilities [N] from a [N,3] point tensor.
ad::Var point_probs(const TapeModel& tm, ad::Var points, int category);
ad::Var maskiou_score(const TapeModel& tm, ad::Var feat, ad::Var mask,
                      int category);
/// Returns (class logits [K+1], box deltas [4K]).
std::pair<ad::Var, ad::Var> box_class(const TapeModel& tm, ad::Var feat);

// --- input builders ---

/// [1,G,G] head input: valid cells standardized per ROI (guarded std),
/// invalid cells zero.
Tensor patch_input(const DisparityPatch& patch, bool standardize);

/// [N,3] point tensor (u, v, d); d optionally standardized per ROI.
Tensor points_input(const PointSet3D& ps, bool standardize);

// --- double-level forward passes (inference contract) ---

RoiFeature extract_roi_features(const Tensor& image, const RoiBox& box,
                                const Model& model);
ProbMask predict_mask_2d(const RoiFeature& feat, int category,
                         const Model& model);
ProbMask predict_mask_25d(const DisparityPatch& patch, int category,
                          const Model& model);
std::pair<std::vector<double>, ProbMask> predict_mask_3d(const PointSet3D& ps,
                                                         int category,
                                                         const Model& model);
double predict_maskiou(const RoiFeature& feat, const ProbMask& mask,
                       int category, const Model& model);
std::pair<std::vector<double>, std::vector<double>> predict_box_class(
    const RoiFeature& feat, const Model& model);

/// Standard center/size delta decode; zero deltas return the proposal.
RoiBox decode_box(const RoiBox& proposal, const double* deltas4);
/// Encode the deltas that map `proposal` onto `target`.
std::vector<double> encode_box(const RoiBox& proposal, const RoiBox& target);

}  // namespace geoseg
