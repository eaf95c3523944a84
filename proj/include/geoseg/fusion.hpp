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

#include <vector>

#include "geoseg/geometry.hpp"

namespace geoseg {

struct ScoredMask {
  ProbMask mask;
  double score = 0.0;
};

/// Score-weighted convex combination of two masks. Near-zero score sums fall
/// back to equal weights.
ScoredMask fuse_pair(const ScoredMask& a, const ScoredMask& b);

/// Two-stage fusion: disparity-side masks first, then the image-side mask.
ScoredMask fuse_all(const ScoredMask& m2d, const ScoredMask& m25d,
                    const ScoredMask& m3d);

/// Cell >= threshold maps to 1.
std::vector<uint8_t> binarize(const ProbMask& m, double threshold = 0.5);

}  // namespace geoseg
