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

#include "geoseg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "geoseg/rng.hpp"

namespace geoseg {

RoiBox RoiBox::clipped(double w, double h) const {
  RoiBox b;
  b.x0 = std::clamp(x0, 0.0, w);
  b.y0 = std::clamp(y0, 0.0, h);
  b.x1 = std::clamp(x1, 0.0, w);
  b.y1 = std::clamp(y1, 0.0, h);
  return b;
}

double box_iou(const RoiBox& a, const RoiBox& b) {
  double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  double inter = ix * iy;
  double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double disparity_to_depth(double disparity_px, const StereoRig& rig) {
  if (rig.focal_length_px <= 0.0 || rig.baseline_m <= 0.0)
    throw std::domain_error("stereo rig parameters must be positive");
  if (disparity_px <= 0.0)
    throw std::domain_error("non-positive disparity has no depth");
  return rig.focal_length_px * rig.baseline_m / disparity_px;
}

double depth_to_disparity(double depth_m, const StereoRig& rig) {
  if (rig.focal_length_px <= 0.0 || rig.baseline_m <= 0.0)
    throw std::domain_error("stereo rig parameters must be positive");
  if (depth_m <= 0.0) throw std::domain_error("non-positive depth");
  return rig.focal_length_px * rig.baseline_m / depth_m;
}

DisparityPatch crop_roi_disparity(const DisparityMap& map, const RoiBox& box,
                                  int grid) {
  if (grid < 2) throw std::invalid_argument("grid size must be >= 2");
  RoiBox b = box.clipped(map.width, map.height);
  if (b.area() <= 0.0)
    throw std::invalid_argument("degenerate proposal: zero-area box");

  DisparityPatch patch;
  patch.grid = grid;
  patch.source_box = b;
  patch.values.assign(static_cast<size_t>(grid) * grid, 0.0);
  patch.valid.assign(static_cast<size_t>(grid) * grid, 0);

  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx) {
      // Sample at the cell center, pixel-center convention.
      double sx = b.x0 + (gx + 0.5) * b.width() / grid - 0.5;
      double sy = b.y0 + (gy + 0.5) * b.height() / grid - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(map.width - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(map.height - 1));
      int j0 = std::min(static_cast<int>(std::floor(sx)), map.width - 1);
      int i0 = std::min(static_cast<int>(std::floor(sy)), map.height - 1);
      int j1 = std::min(j0 + 1, map.width - 1);
      int i1 = std::min(i0 + 1, map.height - 1);
      double fx = sx - j0;
      double fy = sy - i0;
      double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
      double w10 = fy * (1 - fx), w11 = fy * fx;
      double v = w00 * map.at(i0, j0) + w01 * map.at(i0, j1) +
                 w10 * map.at(i1, j0) + w11 * map.at(i1, j1);
      bool ok = (w00 == 0.0 || map.valid_at(i0, j0)) &&
                (w01 == 0.0 || map.valid_at(i0, j1)) &&
                (w10 == 0.0 || map.valid_at(i1, j0)) &&
                (w11 == 0.0 || map.valid_at(i1, j1));
      size_t q = static_cast<size_t>(gy) * grid + gx;
      patch.values[q] = v;
      patch.valid[q] = ok ? 1 : 0;
    }
  return patch;
}

PointSet3D backproject_roi(const DisparityPatch& patch) {
  PointSet3D ps;
  int g = patch.grid;
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      size_t q = static_cast<size_t>(i) * g + j;
      if (!patch.valid[q]) continue;
      ps.u.push_back((j + 0.5) / g);
      ps.v.push_back((i + 0.5) / g);
      ps.d.push_back(patch.values[q]);
      ps.source_index.push_back(static_cast<int>(q));
    }
  if (ps.size() == 0)
    throw std::invalid_argument("empty ROI: no valid disparity cells");
  return ps;
}

PointSet3D sample_points(const PointSet3D& ps, int n, uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("sample count must be positive");
  if (ps.size() == 0) throw std::invalid_argument("cannot sample empty set");
  int m = static_cast<int>(ps.size());

  std::vector<int> chosen;
  chosen.reserve(static_cast<size_t>(n));
  Rng rng(seed);
  if (m >= n) {
    // Without replacement: partial Fisher-Yates, then restore input order.
    std::vector<int> idx(static_cast<size_t>(m));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < n; ++i) {
      int j = i + rng.uniform_int(m - i);
      std::swap(idx[i], idx[j]);
    }
    chosen.assign(idx.begin(), idx.begin() + n);
    std::sort(chosen.begin(), chosen.end());
  } else {
    for (int i = 0; i < n; ++i) chosen.push_back(rng.uniform_int(m));
    std::sort(chosen.begin(), chosen.end());
  }

  PointSet3D out;
  out.u.reserve(chosen.size());
  for (int i : chosen) {
    out.u.push_back(ps.u[i]);
    out.v.push_back(ps.v[i]);
    out.d.push_back(ps.d[i]);
    out.source_index.push_back(ps.source_index[i]);
  }
  return out;
}

std::vector<std::vector<int>> make_reproject_plan(
    const std::vector<int>& source_index, int grid) {
  int cells = grid * grid;
  std::vector<std::vector<int>> plan(static_cast<size_t>(cells));
  for (size_t p = 0; p < source_index.size(); ++p) {
    int q = source_index[p];
    if (q < 0 || q >= cells)
      throw std::invalid_argument("source_index out of grid range");
    plan[static_cast<size_t>(q)].push_back(static_cast<int>(p));
  }
  // Fill empty cells from the nearest occupied cell center.
  std::vector<int> occupied;
  for (int q = 0; q < cells; ++q)
    if (!plan[q].empty()) occupied.push_back(q);
  if (occupied.empty())
    throw std::invalid_argument("reprojection requires at least one point");
  for (int q = 0; q < cells; ++q) {
    if (!plan[q].empty()) continue;
    double qi = q / grid, qj = q % grid;
    int best = occupied[0];
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int o : occupied) {
      double di = o / grid - qi, dj = o % grid - qj;
      double d2 = di * di + dj * dj;
      if (d2 < best_d2) {  // strict: ties keep the smaller flat index
        best_d2 = d2;
        best = o;
      }
    }
    plan[q] = plan[best];
  }
  return plan;
}

ProbMask reproject_points(const PointSet3D& ps,
                          const std::vector<double>& per_point, int grid) {
  if (per_point.size() != ps.size())
    throw std::invalid_argument("per-point value count mismatch");
  if (ps.size() == 0) throw std::invalid_argument("empty point set");
  auto plan = make_reproject_plan(ps.source_index, grid);
  ProbMask mask(grid);
  for (int q = 0; q < grid * grid; ++q) {
    double s = 0.0;
    for (int p : plan[q]) s += per_point[p];
    mask.p[q] = s / plan[q].size();
  }
  return mask;
}

}  // namespace geoseg
