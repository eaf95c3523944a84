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

namespace geoseg {

// Three shape families standing in for the road classes: ellipses, thin
// tilted bars, and boxy rectangles.
constexpr int kNumCategories = 3;
constexpr const char* kCategoryNames[kNumCategories] = {"human", "twowheeler",
                                                        "vehicle"};

struct ImageU8 {
  int width = 0, height = 0;
  std::vector<uint8_t> rgb;  // H*W*3, row-major

  uint8_t* px(int y, int x) {
    return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  const uint8_t* px(int y, int x) const {
    return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
};

struct InstanceGt {
  int category = 0;
  RoiBox box;        // tight around visible pixels
  double depth_m = 0.0;
};

struct SceneRecord {
  int id = 0;
  ImageU8 image;
  DisparityMap disparity;
  std::vector<uint8_t> instance_map;  // 0 = background, ids from 1
  std::vector<InstanceGt> instances;
  StereoRig rig;
};

struct SceneConfig {
  int width = 256;
  int height = 128;
  int min_instances = 2;
  int max_instances = 6;
  double min_depth_m = 5.0;
  double max_depth_m = 60.0;
  double overlap_prob = 0.3;
  StereoRig rig{3300.0 * 256.0 / 3072.0, 0.5};

  /// Keeps the focal length proportional to image width, like scaling a
  /// full-resolution rig down to desk size.
  static SceneConfig with_size(int w, int h);
};

SceneRecord generate_scene(const SceneConfig& config, uint64_t seed);

struct Proposal {
  RoiBox box;
  int matched_gt = -1;  // index into scene.instances, -1 for negatives
  int label = kNumCategories;  // category id, or kNumCategories = background
};

std::vector<Proposal> make_proposals(const SceneRecord& scene, uint64_t seed,
                                     double jitter = 0.15,
                                     int negatives_per_image = 4,
                                     int copies_per_instance = 3);

void write_dataset(const std::vector<SceneRecord>& scenes,
                   const std::string& dir);
std::vector<SceneRecord> read_dataset(const std::string& dir);

}  // namespace geoseg
