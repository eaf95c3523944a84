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

namespace geoseg {

struct StereoRig {
  double focal_length_px = 0.0;  // horizontal focal length, pixels
  double baseline_m = 0.0;       // baseline, meters
};

struct DisparityMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // disparity in pixels, row-major
  std::vector<uint8_t> valid;  // nonzero where disparity is usable

  double at(int y, int x) const {
    return values[static_cast<size_t>(y) * width + x];
  }
  bool valid_at(int y, int x) const {
    return valid[static_cast<size_t>(y) * width + x] != 0;
  }
};

/// Half-open pixel box [x0,x1) x [y0,y1).
struct RoiBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
  RoiBox clipped(double w, double h) const;
};

double box_iou(const RoiBox& a, const RoiBox& b);

/// 2.5D ROI: a G x G resampling of the disparity map inside a box.
struct DisparityPatch {
  int grid = 0;
  std::vector<double> values;  // G*G, row-major
  std::vector<uint8_t> valid;
  RoiBox source_box;
};

/// 3D ROI: ordered (u, v, d) points with the flat patch cell each came from.
struct PointSet3D {
  std::vector<double> u, v, d;
  std::vector<int> source_index;

  size_t size() const { return u.size(); }
};

/// Probability mask on a fixed G x G grid; values in [0,1].
struct ProbMask {
  int grid = 0;
  std::vector<double> p;

  ProbMask() = default;
  ProbMask(int g, double fill = 0.0)
      : grid(g), p(static_cast<size_t>(g) * g, fill) {}
  double at(int i, int j) const {
    return p[static_cast<size_t>(i) * grid + j];
  }
  double& at(int i, int j) { return p[static_cast<size_t>(i) * grid + j]; }
};

double disparity_to_depth(double disparity_px, const StereoRig& rig);
double depth_to_disparity(double depth_m, const StereoRig& rig);

DisparityPatch crop_roi_disparity(const DisparityMap& map, const RoiBox& box,
                                  int grid);

PointSet3D backproject_roi(const DisparityPatch& patch);

PointSet3D sample_points(const PointSet3D& ps, int n, uint64_t seed);

/// For each grid cell, the point indices that land in it; empty cells borrow
/// the point list of the nearest occupied cell (ties to the smaller flat
/// index). Shared by reproject_points and the point-head training path.
std::vector<std::vector<int>> make_reproject_plan(
    const std::vector<int>& source_index, int grid);

ProbMask reproject_points(const PointSet3D& ps,
                          const std::vector<double>& per_point, int grid);

}  // namespace geoseg
