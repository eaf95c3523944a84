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

#include "geoseg/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "geoseg/rng.hpp"

namespace geoseg {

namespace {

constexpr char kCheckpointMagic[8] = {'G', 'S', 'C', 'K', 'P', 'T', '0', '1'};
constexpr double kInitStd = 0.01;
constexpr int kIouChannels = 16;
constexpr int kFcWidth = 128;

void check_category(int category, const ModelConfig& cfg) {
  if (category < 0 || category >= cfg.categories)
    throw std::invalid_argument("unknown category id");
}

// Fan-in scaled init for hidden layers; weights are truncated normals so
// reruns match across libstdc++ versions. Fan-in is everything but the
// leading (output) dimension.
Tensor init_tensor(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  int64_t fan_in = 1;
  for (size_t i = 1; i < t.shape.size(); ++i) fan_in *= t.shape[i];
  double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : t.data) v = rng.truncated_normal(std);
  return t;
}

// Output layers start near zero so the heads open at neutral values
// (uniform class logits, probability-0.5 masks).
Tensor init_output_tensor(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.truncated_normal(kInitStd);
  return t;
}

}  // namespace

Model Model::init(const ModelConfig& cfg, uint64_t seed) {
  Model m;
  m.cfg = cfg;
  m.init_seed = seed;
  Rng rng(seed);
  const int c = cfg.channels, k = cfg.categories, g = cfg.grid;
  auto w = [&](const std::string& name, std::vector<int> shape) {
    m.params[name] = init_tensor(std::move(shape), rng);
  };
  auto wo = [&](const std::string& name, std::vector<int> shape) {
    m.params[name] = init_output_tensor(std::move(shape), rng);
  };
  auto b = [&](const std::string& name, int n) {
    m.params[name] = Tensor({n});
  };

  w("bb.conv1.w", {c, 3, 3, 3});
  b("bb.conv1.b", c);
  w("bb.conv2.w", {c, c, 3, 3});
  b("bb.conv2.b", c);
  w("bb.conv3.w", {c, c, 3, 3});
  b("bb.conv3.b", c);

  w("m2d.conv1.w", {c, c, 3, 3});
  b("m2d.conv1.b", c);
  wo("m2d.conv2.w", {k, c, 1, 1});
  b("m2d.conv2.b", k);

  w("m25.conv1.w", {c, 1, 3, 3});
  b("m25.conv1.b", c);
  w("m25.conv2.w", {c, c, 3, 3});
  b("m25.conv2.b", c);
  wo("m25.conv3.w", {k, c, 1, 1});
  b("m25.conv3.b", k);

  w("p3.fc1.w", {32, 3});
  b("p3.fc1.b", 32);
  w("p3.fc2.w", {64, 32});
  b("p3.fc2.b", 64);
  w("p3.fc3.w", {64, 128});
  b("p3.fc3.b", 64);
  wo("p3.fc4.w", {k, 64});
  b("p3.fc4.b", k);

  w("mi.conv1.w", {kIouChannels, c + 1, 3, 3});
  b("mi.conv1.b", kIouChannels);
  w("mi.fc1.w", {64, kIouChannels * (g / 2) * (g / 2)});
  b("mi.fc1.b", 64);
  wo("mi.fc2.w", {k, 64});
  b("mi.fc2.b", k);

  w("bc.fc1.w", {kFcWidth, c * g * g});
  b("bc.fc1.b", kFcWidth);
  wo("bc.cls.w", {k + 1, kFcWidth});
  b("bc.cls.b", k + 1);
  wo("bc.box.w", {4 * k, kFcWidth});
  b("bc.box.b", 4 * k);
  return m;
}

// Binary container: magic, config ints, init seed, then name/shape/data
// records. Little-endian doubles; see README for the layout.
void Model::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint for write: " + path);
  f.write(kCheckpointMagic, 8);
  int32_t ints[5] = {cfg.channels, cfg.grid, cfg.categories, cfg.n_points,
                     cfg.standardize_disparity ? 1 : 0};
  f.write(reinterpret_cast<const char*>(ints), sizeof(ints));
  uint64_t seed = init_seed;
  f.write(reinterpret_cast<const char*>(&seed), sizeof(seed));
  uint32_t count = static_cast<uint32_t>(params.size());
  f.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& [name, t] : params) {
    uint32_t nlen = static_cast<uint32_t>(name.size());
    f.write(reinterpret_cast<const char*>(&nlen), sizeof(nlen));
    f.write(name.data(), nlen);
    uint32_t nd = static_cast<uint32_t>(t.shape.size());
    f.write(reinterpret_cast<const char*>(&nd), sizeof(nd));
    for (int d : t.shape) {
      int32_t dd = d;
      f.write(reinterpret_cast<const char*>(&dd), sizeof(dd));
    }
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

Model Model::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("bad checkpoint magic: " + path);
  Model m;
  int32_t ints[5];
  f.read(reinterpret_cast<char*>(ints), sizeof(ints));
  m.cfg.channels = ints[0];
  m.cfg.grid = ints[1];
  m.cfg.categories = ints[2];
  m.cfg.n_points = ints[3];
  m.cfg.standardize_disparity = ints[4] != 0;
  uint64_t seed = 0;
  f.read(reinterpret_cast<char*>(&seed), sizeof(seed));
  m.init_seed = seed;
  uint32_t count = 0;
  f.read(reinterpret_cast<char*>(&count), sizeof(count));
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t nlen = 0;
    f.read(reinterpret_cast<char*>(&nlen), sizeof(nlen));
    std::string name(nlen, '\0');
    f.read(name.data(), nlen);
    uint32_t nd = 0;
    f.read(reinterpret_cast<char*>(&nd), sizeof(nd));
    std::vector<int> shape(nd);
    for (uint32_t d = 0; d < nd; ++d) {
      int32_t dd = 0;
      f.read(reinterpret_cast<char*>(&dd), sizeof(dd));
      shape[d] = dd;
    }
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    m.params[name] = std::move(t);
  }
  return m;
}

ad::Var TapeModel::v(const std::string& name) const {
  auto it = p.find(name);
  if (it == p.end()) throw std::logic_error("unknown parameter: " + name);
  return it->second;
}

TapeModel bind(ad::Tape& tape, const Model& model) {
  TapeModel tm;
  tm.model = &model;
  tm.tape = &tape;
  for (const auto& [name, t] : model.params) tm.p[name] = tape.put(t);
  return tm;
}

ad::Var backbone_features(const TapeModel& tm, ad::Var image) {
  ad::Tape& t = *tm.tape;
  ad::Var h1 = t.relu(
      t.conv2d(image, tm.v("bb.conv1.w"), tm.v("bb.conv1.b"), 2, ad::Pad::kZero));
  ad::Var h2 = t.relu(
      t.conv2d(h1, tm.v("bb.conv2.w"), tm.v("bb.conv2.b"), 1, ad::Pad::kZero));
  return t.relu(
      t.conv2d(h2, tm.v("bb.conv3.w"), tm.v("bb.conv3.b"), 1, ad::Pad::kZero));
}

ad::Var roi_feature_map(const TapeModel& tm, ad::Var fmap, const RoiBox& box,
                        int image_w, int image_h) {
  ad::Tape& t = *tm.tape;
  RoiBox b = box.clipped(image_w, image_h);
  if (b.area() <= 0.0)
    throw std::invalid_argument("degenerate proposal: zero-area box");
  const Tensor& fm = t.val(fmap);
  double sx = static_cast<double>(fm.dim(2)) / image_w;
  double sy = static_cast<double>(fm.dim(1)) / image_h;
  return t.crop_resize(fmap, b.x0 * sx, b.y0 * sy, b.x1 * sx, b.y1 * sy,
                       tm.model->cfg.grid);
}

ad::Var mask2d_prob(const TapeModel& tm, ad::Var feat, int category) {
  check_category(category, tm.model->cfg);
  ad::Tape& t = *tm.tape;
  ad::Var h = t.relu(t.conv2d(feat, tm.v("m2d.conv1.w"), tm.v("m2d.conv1.b"), 1,
                              ad::Pad::kReplicate));
  ad::Var logits = t.conv2d(h, tm.v("m2d.conv2.w"), tm.v("m2d.conv2.b"), 1,
                            ad::Pad::kReplicate);
  return t.sigmoid(t.slice_channel(logits, category));
}

ad::Var mask25d_prob(const TapeModel& tm, ad::Var patch_in, int category) {
  check_category(category, tm.model->cfg);
  ad::Tape& t = *tm.tape;
  ad::Var h1 = t.relu(t.conv2d(patch_in, tm.v("m25.conv1.w"),
                               tm.v("m25.conv1.b"), 1, ad::Pad::kReplicate));
  ad::Var h2 = t.relu(t.conv2d(h1, tm.v("m25.conv2.w"), tm.v("m25.conv2.b"), 1,
                               ad::Pad::kReplicate));
  ad::Var logits = t.conv2d(h2, tm.v("m25.conv3.w"), tm.v("m25.conv3.b"), 1,
                            ad::Pad::kReplicate);
  return t.sigmoid(t.slice_channel(logits, category));
}

ad::Var point_probs(const TapeModel& tm, ad::Var points, int category) {
  check_category(category, tm.model->cfg);
  ad::Tape& t = *tm.tape;
  ad::Var f1 = t.relu(t.linear(points, tm.v("p3.fc1.w"), tm.v("p3.fc1.b")));
  ad::Var f2 = t.relu(t.linear(f1, tm.v("p3.fc2.w"), tm.v("p3.fc2.b")));
  ad::Var global = t.colmax(f2);  // [64]
  ad::Var cat = t.concat_rows_broadcast(f2, global);  // [N,128]
  ad::Var f3 = t.relu(t.linear(cat, tm.v("p3.fc3.w"), tm.v("p3.fc3.b")));
  ad::Var logits = t.linear(f3, tm.v("p3.fc4.w"), tm.v("p3.fc4.b"));  // [N,K]
  return t.sigmoid(t.column(logits, category));
}

ad::Var maskiou_score(const TapeModel& tm, ad::Var feat, ad::Var mask,
                      int category) {
  check_category(category, tm.model->cfg);
  ad::Tape& t = *tm.tape;
  const int g = tm.model->cfg.grid;
  const Tensor& mv = t.val(mask);
  if (mv.ndim() != 2 || mv.dim(0) != g || mv.dim(1) != g)
    throw std::invalid_argument("mask grid size mismatch");
  ad::Var mc = t.reshape(mask, {1, g, g});
  ad::Var x = t.concat_channels(feat, mc);
  ad::Var h = t.relu(
      t.conv2d(x, tm.v("mi.conv1.w"), tm.v("mi.conv1.b"), 2, ad::Pad::kZero));
  const Tensor& hv = t.val(h);
  ad::Var flat = t.reshape(h, {1, hv.size()});
  ad::Var f1 = t.relu(t.linear(flat, tm.v("mi.fc1.w"), tm.v("mi.fc1.b")));
  ad::Var out = t.linear(f1, tm.v("mi.fc2.w"), tm.v("mi.fc2.b"));  // [1,K]
  return t.sigmoid(t.reshape(t.column(out, category), {1}));
}

std::pair<ad::Var, ad::Var> box_class(const TapeModel& tm, ad::Var feat) {
  ad::Tape& t = *tm.tape;
  const Tensor& fv = t.val(feat);
  ad::Var flat = t.reshape(feat, {1, fv.size()});
  ad::Var f1 = t.relu(t.linear(flat, tm.v("bc.fc1.w"), tm.v("bc.fc1.b")));
  ad::Var logits = t.reshape(t.linear(f1, tm.v("bc.cls.w"), tm.v("bc.cls.b")),
                             {tm.model->cfg.categories + 1});
  ad::Var deltas = t.reshape(t.linear(f1, tm.v("bc.box.w"), tm.v("bc.box.b")),
                             {4 * tm.model->cfg.categories});
  return {logits, deltas};
}

Tensor patch_input(const DisparityPatch& patch, bool standardize) {
  int g = patch.grid;
  Tensor in({1, g, g});
  double mean = 0.0, var = 0.0;
  int n = 0;
  for (int q = 0; q < g * g; ++q)
    if (patch.valid[q]) {
      mean += patch.values[q];
      ++n;
    }
  if (n > 0) mean /= n;
  for (int q = 0; q < g * g; ++q)
    if (patch.valid[q]) {
      double d = patch.values[q] - mean;
      var += d * d;
    }
  double std = n > 0 ? std::sqrt(var / n) : 0.0;
  double scale = std >= 1e-6 ? 1.0 / std : 1.0;
  for (int q = 0; q < g * g; ++q) {
    if (!patch.valid[q]) continue;
    in.data[q] = standardize ? (patch.values[q] - mean) * scale
                             : patch.values[q];
  }
  return in;
}

Tensor points_input(const PointSet3D& ps, bool standardize) {
  int n = static_cast<int>(ps.size());
  Tensor in({n, 3});
  double mean = 0.0, var = 0.0;
  for (double d : ps.d) mean += d;
  mean /= n;
  for (double d : ps.d) var += (d - mean) * (d - mean);
  double std = std::sqrt(var / n);
  double scale = std >= 1e-6 ? 1.0 / std : 1.0;
  for (int i = 0; i < n; ++i) {
    in.at(i, 0) = ps.u[i];
    in.at(i, 1) = ps.v[i];
    in.at(i, 2) = standardize ? (ps.d[i] - mean) * scale : ps.d[i];
  }
  return in;
}

RoiFeature extract_roi_features(const Tensor& image, const RoiBox& box,
                                const Model& model) {
  ad::Tape tape;
  TapeModel tm = bind(tape, model);
  ad::Var img = tape.put(image);
  ad::Var fmap = backbone_features(tm, img);
  ad::Var feat = roi_feature_map(tm, fmap, box, image.dim(2), image.dim(1));
  RoiFeature out;
  out.grid = tape.val(feat);
  out.source_box = box.clipped(image.dim(2), image.dim(1));
  return out;
}

namespace {

ProbMask to_probmask(const Tensor& t) {
  ProbMask m(t.dim(0));
  m.p = t.data;
  return m;
}

}  // namespace

ProbMask predict_mask_2d(const RoiFeature& feat, int category,
                         const Model& model) {
  ad::Tape tape;
  TapeModel tm = bind(tape, model);
  ad::Var f = tape.put(feat.grid);
  return to_probmask(tape.val(mask2d_prob(tm, f, category)));
}

ProbMask predict_mask_25d(const DisparityPatch& patch, int category,
                          const Model& model) {
  ad::Tape tape;
  TapeModel tm = bind(tape, model);
  ad::Var in = tape.put(patch_input(patch, model.cfg.standardize_disparity));
  return to_probmask(tape.val(mask25d_prob(tm, in, category)));
}

std::pair<std::vector<double>, ProbMask> predict_mask_3d(const PointSet3D& ps,
                                                         int category,
                                                         const Model& model) {
  if (static_cast<int>(ps.size()) != model.cfg.n_points)
    throw std::invalid_argument("point head expects exactly n_points points");
  ad::Tape tape;
  TapeModel tm = bind(tape, model);
  ad::Var pts = tape.put(points_input(ps, model.cfg.standardize_disparity));
  ad::Var probs = point_probs(tm, pts, category);
  std::vector<double> pp = tape.val(probs).data;
  ProbMask mask = reproject_points(ps, pp, model.cfg.grid);
  return {std::move(pp), std::move(mask)};
}

double predict_maskiou(const RoiFeature& feat, const ProbMask& mask,
                       int category, const Model& model) {
  ad::Tape tape;
  TapeModel tm = bind(tape, model);
  ad::Var f = tape.put(feat.grid);
  Tensor mt({mask.grid, mask.grid});
  mt.data = mask.p;
  ad::Var m = tape.put(mt);
  return tape.scalar(maskiou_score(tm, f, m, category));
}

std::pair<std::vector<double>, std::vector<double>> predict_box_class(
    const RoiFeature& feat, const Model& model) {
  ad::Tape tape;
  TapeModel tm = bind(tape, model);
  ad::Var f = tape.put(feat.grid);
  auto [logits, deltas] = box_class(tm, f);
  return {tape.val(logits).data, tape.val(deltas).data};
}

RoiBox decode_box(const RoiBox& proposal, const double* d) {
  double pw = proposal.width(), ph = proposal.height();
  double cx = proposal.x0 + 0.5 * pw + d[0] * pw;
  double cy = proposal.y0 + 0.5 * ph + d[1] * ph;
  double w = pw * std::exp(d[2]);
  double h = ph * std::exp(d[3]);
  return RoiBox{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

std::vector<double> encode_box(const RoiBox& proposal, const RoiBox& target) {
  double pw = proposal.width(), ph = proposal.height();
  double pcx = proposal.x0 + 0.5 * pw, pcy = proposal.y0 + 0.5 * ph;
  double tw = target.width(), th = target.height();
  double tcx = target.x0 + 0.5 * tw, tcy = target.y0 + 0.5 * th;
  return {(tcx - pcx) / pw, (tcy - pcy) / ph, std::log(tw / pw),
          std::log(th / ph)};
}

}  // namespace geoseg
