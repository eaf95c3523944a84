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

#include "geoseg/fusion.hpp"

#include <stdexcept>

namespace geoseg {

ScoredMask fuse_pair(const ScoredMask& a, const ScoredMask& b) {
  if (a.mask.grid != b.mask.grid || a.mask.p.size() != b.mask.p.size())
    throw std::invalid_argument("fuse_pair: mask shape mismatch");
  double sum = a.score + b.score;
  double wa = sum < 1e-8 ? 0.5 : a.score / sum;
  double wb = sum < 1e-8 ? 0.5 : b.score / sum;
  ScoredMask out;
  out.mask = ProbMask(a.mask.grid);
  for (size_t i = 0; i < a.mask.p.size(); ++i)
    out.mask.p[i] = wa * a.mask.p[i] + wb * b.mask.p[i];
  out.score = wa * a.score + wb * b.score;
  return out;
}

ScoredMask fuse_all(const ScoredMask& m2d, const ScoredMask& m25d,
                    const ScoredMask& m3d) {
  ScoredMask disparity = fuse_pair(m25d, m3d);
  return fuse_pair(m2d, disparity);
}

std::vector<uint8_t> binarize(const ProbMask& m, double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0)
    throw std::invalid_argument("binarize: threshold must be in (0,1)");
  std::vector<uint8_t> out(m.p.size());
  for (size_t i = 0; i < m.p.size(); ++i)
    out[i] = m.p[i] >= threshold ? 1 : 0;
  return out;
}

}  // namespace geoseg
