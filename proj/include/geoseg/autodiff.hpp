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

#include <functional>
#include <string>
#include <vector>

#include "geoseg/tensor.hpp"

namespace geoseg::ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class Pad { kZero, kReplicate };

/// Reverse-mode tape. Nodes are created in topological order; backward()
/// walks them in reverse. Values and gradients are dense Tensors.
class Tape {
 public:
  Var put(Tensor value);

  const Tensor& val(Var v) const { return nodes_[check(v)].value; }
  const Tensor& grad(Var v) const { return nodes_[check(v)].grad; }
  double scalar(Var v) const { return val(v).data.at(0); }

  /// Backpropagates from a scalar output. Gradients accumulate into every
  /// node reachable from it; leaves keep theirs until reset().
  void backward(Var out);
  void reset();
  int size() const { return static_cast<int>(nodes_.size()); }

  // --- elementwise ---
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double k);
  Var square(Var a);
  Var relu(Var a);
  Var sigmoid(Var a);

  // --- shape ---
  Var reshape(Var a, std::vector<int> shape);
  Var slice(Var a, int offset, int len);  // flat 1-D slice
  Var slice_channel(Var x, int c);        // [K,H,W] -> [H,W]
  Var column(Var x, int c);               // [N,K]   -> [N]
  Var concat_channels(Var a, Var b);      // [Ca,H,W]+[Cb,H,W] -> [Ca+Cb,H,W]
  Var concat_rows_broadcast(Var x, Var g);  // [N,F1]+[F2] -> [N,F1+F2]

  // --- network layers ---
  Var linear(Var x, Var w, Var b);        // x:[N,K] w:[M,K] b:[M] -> [N,M]
  Var conv2d(Var x, Var w, Var b, int stride, Pad pad);  // x:[C,H,W] w:[O,C,k,k]
  Var colmax(Var x);                      // [N,F] -> [F], max over rows
  /// Bilinear crop-resize of a [C,H,W] map to [C,g,g]; box in map pixels.
  Var crop_resize(Var x, double x0, double y0, double x1, double y1, int g);
  /// Linear cell-averaging projection: y[cell] = mean of x over the point
  /// indices listed for that cell. Every cell's list must be non-empty.
  Var project_cells(Var x, const std::vector<std::vector<int>>& cell_points,
                    int g);

  // --- reductions & losses ---
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var bce_mean(Var pred, const Tensor& target, double eps);
  Var symmetric_ce_mean(Var a, Var b, double eps);
  Var laplacian_energy(Var m);            // 5-point stencil, replicate pad
  Var softmax_ce(Var logits, int label);  // logits: [K]
  Var smooth_l1_sum(Var pred, const Tensor& target);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> back;  // null for leaves
  };

  int check(Var v) const {
    if (!v.valid() || v.id >= size()) throw std::logic_error("bad Var");
    return v.id;
  }
  Var emit(Tensor value, std::function<void(Tape&)> back);
  Tensor& grad_buf(int id);

  std::vector<Node> nodes_;
};

}  // namespace geoseg::ad
