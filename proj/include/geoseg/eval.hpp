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
#include <string>
#include <vector>

#include "geoseg/geometry.hpp"

namespace geoseg::eval {

struct BinMask {
  int width = 0, height = 0;
  std::vector<uint8_t> v;

  bool at(int y, int x) const {
    return v[static_cast<size_t>(y) * width + x] != 0;
  }
  int64_t area() const {
    int64_t n = 0;
    for (uint8_t b : v) n += b ? 1 : 0;
    return n;
  }
};

struct Detection {
  RoiBox box;
  int category = 0;
  double box_score = 0.0;
  BinMask mask;  // box-resolution; pasted to image frame for IoU
  double mask_score = 0.0;
  int image_id = 0;
  int id = 0;  // tie-breaker for ranking
};

struct GroundTruth {
  RoiBox box;
  int category = 0;
  BinMask mask;  // image-resolution
  int image_id = 0;
};

struct EvalResult {
  double ap = 0, ap50 = 0, ap75 = 0, ap_s = 0, ap_l = 0;  // percentages
  int64_t gt_small = 0, gt_large = 0;
};

/// |a n b| / |a u b|; both empty -> 1. Shapes must match.
double mask_iou(const BinMask& a, const BinMask& b);
double ranking_score(const Detection& d);

/// Paste a box-resolution mask into an image-resolution frame.
BinMask paste_mask(const BinMask& mask, const RoiBox& box, int image_w,
                   int image_h);

/// Greedy COCO-style matching within category for one IoU threshold.
/// Detections must be pre-sorted by descending ranking score. Returns one
/// flag per detection: 1 = TP, 0 = FP.
std::vector<int> match_and_score(const std::vector<Detection>& dets,
                                 const std::vector<GroundTruth>& gts,
                                 double iou_threshold, int image_w,
                                 int image_h, bool box_mode = false);

EvalResult coco_ap(const std::vector<Detection>& dets,
                   const std::vector<GroundTruth>& gts, int image_w,
                   int image_h, bool box_mode = false);

std::string format_table(const EvalResult& mask_ap, const EvalResult& box_ap);

}  // namespace geoseg::eval
