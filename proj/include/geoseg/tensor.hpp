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
#include <numeric>
#include <stdexcept>
#include <vector>

namespace geoseg {

/// Dense row-major tensor of doubles. All network math in this project is
/// 64-bit so finite-difference checks are meaningful.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0)
      : shape(std::move(s)) {
    data.assign(static_cast<size_t>(count(shape)), fill);
  }

  static Tensor scalar(double v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
  }

  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("negative tensor dim");
      n *= d;
    }
    return n;
  }

  int size() const { return static_cast<int>(data.size()); }
  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }
  int ndim() const { return static_cast<int>(shape.size()); }

  double& operator[](int i) { return data[static_cast<size_t>(i)]; }
  double operator[](int i) const { return data[static_cast<size_t>(i)]; }

  // 2D / 3D row-major accessors; caller is responsible for rank.
  double& at(int i, int j) { return data[static_cast<size_t>(i) * dim(1) + j]; }
  double at(int i, int j) const {
    return data[static_cast<size_t>(i) * dim(1) + j];
  }
  double& at(int c, int i, int j) {
    return data[(static_cast<size_t>(c) * dim(1) + i) * dim(2) + j];
  }
  double at(int c, int i, int j) const {
    return data[(static_cast<size_t>(c) * dim(1) + i) * dim(2) + j];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace geoseg
