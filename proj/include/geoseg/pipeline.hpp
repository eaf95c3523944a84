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

#include <cstdint>
#include <vector>

#include "geoseg/data.hpp"
#include "geoseg/eval.hpp"
#include "geoseg/fusion.hpp"
#include "geoseg/losses.hpp"
#include "geoseg/models.hpp"

namespace geoseg {

/// Which mask representations run; the image-domain head is always on.
enum class ReprMode { k2D, k2D25D, k2D3D, kFull };

bool uses_25d(ReprMode m);
bool uses_3d(ReprMode m);

struct TrainConfig {
  int epochs = 20;
  double learning_rate = 0.01;
  double momentum = 0.9;
  uint64_t seed = 0;
  LossWeights weights;
  ModelConfig model;
  ReprMode repr = ReprMode::kFull;
  double proposal_jitter = 0.15;
  int negatives_per_image = 4;
  int copies_per_instance = 3;
  bool continuity_on_all_masks = false;  // default: 3D mask only
};

struct HeadCallCounts {
  int64_t mask2d = 0, mask25d = 0, mask3d = 0, maskiou = 0, boxcls = 0;
};

struct TrainResult {
  Model model;
  std::vector<LossReport> epoch_log;  // per-epoch means
  HeadCallCounts counts;
};

TrainResult train(const std::vector<SceneRecord>& scenes,
                  const TrainConfig& config);

struct InferConfig {
  ReprMode repr = ReprMode::kFull;
  double box_score_floor = 0.05;
  uint64_t seed = 1;
  double proposal_jitter = 0.15;
  int negatives_per_image = 4;
  int copies_per_instance = 3;
};

/// Per-detection pre-binarization masks, kept for instrumented tests.
struct InferDebug {
  std::vector<ScoredMask> m2d, fused;
};

std::vector<eval::Detection> infer(const SceneRecord& scene,
                                   const Model& model,
                                   const InferConfig& config,
                                   HeadCallCounts* counts = nullptr,
                                   InferDebug* debug = nullptr);

/// Ground truth in the eval module's format (visible-pixel masks).
std::vector<eval::GroundTruth> scene_ground_truth(const SceneRecord& scene);

/// [3,H,W] double tensor in [0,1] from an 8-bit image.
Tensor image_tensor(const ImageU8& image);

/// Grid-resolution binary ground truth for a proposal box, sampled from the
/// instance map at cell centers.
BinaryGrid proposal_gt_mask(const SceneRecord& scene, const RoiBox& box,
                            int instance_id, int grid);

/// Mean Laplacian energy of the 3D-head mask over all foreground proposals
/// of the given scenes; the continuity-ablation measurement.
double mean_mask3d_laplacian(const std::vector<SceneRecord>& scenes,
                             const Model& model, uint64_t seed);

}  // namespace geoseg
