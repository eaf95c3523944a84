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

#include "geoseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "geoseg/rng.hpp"

namespace geoseg {

namespace {

constexpr double kOverlapIouFloor = 0.3;   // forced pair must reach this
constexpr double kSeparationIou = 0.3;     // everyone else must stay below
constexpr double kMinDepthRatio = 1.25;    // >= 20% depth difference
constexpr int kMinVisiblePixels = 12;
constexpr double kSkyFraction = 0.125;

struct Shape {
  int category = 0;
  double cx = 0, cy = 0;   // center, pixels
  double rx = 0, ry = 0;   // half extents
  double tilt = 0;         // bars only
  double depth_m = 0;
  int color_jitter = 0;

  bool contains(double x, double y) const {
    double dx = x - cx, dy = y - cy;
    switch (category) {
      case 0: {  // ellipse
        double a = dx / rx, b = dy / ry;
        return a * a + b * b <= 1.0;
      }
      case 1: {  // tilted thin bar
        double c = std::cos(tilt), s = std::sin(tilt);
        double lx = c * dx + s * dy, ly = -s * dx + c * dy;
        return std::abs(lx) <= rx && std::abs(ly) <= ry;
      }
      default:  // rectangle
        return std::abs(dx) <= rx && std::abs(dy) <= ry;
    }
  }

  // Loose axis-aligned bound; used only for placement rejection.
  RoiBox bound() const {
    double ex = rx, ey = ry;
    if (category == 1) {
      double c = std::abs(std::cos(tilt)), s = std::abs(std::sin(tilt));
      ex = c * rx + s * ry;
      ey = s * rx + c * ry;
    }
    return RoiBox{cx - ex, cy - ey, cx + ex, cy + ey};
  }
};

Shape sample_shape(Rng& rng, const SceneConfig& cfg, int category) {
  Shape s;
  s.category = category;
  double h = cfg.height;
  switch (category) {
    case 0:
      s.ry = rng.uniform(0.10, 0.22) * h;
      s.rx = s.ry * rng.uniform(0.30, 0.45);
      break;
    case 1:
      s.ry = rng.uniform(0.12, 0.25) * h;
      s.rx = std::max(1.5, s.ry * rng.uniform(0.10, 0.18));
      s.tilt = rng.uniform(-0.35, 0.35);
      break;
    default:
      s.ry = rng.uniform(0.08, 0.16) * h;
      s.rx = s.ry * rng.uniform(1.3, 2.2);
      break;
  }
  s.cx = rng.uniform(s.rx, cfg.width - s.rx);
  s.cy = rng.uniform(s.ry, cfg.height - s.ry);
  s.depth_m = rng.uniform(cfg.min_depth_m, cfg.max_depth_m);
  s.color_jitter = rng.uniform_int(48);
  return s;
}

// Deterministic per-pixel texture hash.
uint32_t pixel_hash(uint32_t x, uint32_t y, uint32_t salt) {
  uint32_t h = x * 374761393u + y * 668265263u + salt * 2246822519u;
  h = (h ^ (h >> 13)) * 1274126177u;
  return h ^ (h >> 16);
}

void base_color(int category, int jitter, uint8_t out[3]) {
  static const int base[kNumCategories][3] = {
      {190, 90, 80}, {90, 180, 100}, {80, 110, 200}};
  for (int c = 0; c < 3; ++c) {
    int v = base[category][c] + jitter - 24;
    out[c] = static_cast<uint8_t>(std::clamp(v, 0, 255));
  }
}

void validate(const SceneConfig& cfg) {
  if (cfg.width < 16 || cfg.height < 16)
    throw std::invalid_argument("scene too small");
  if (cfg.min_instances < 1 || cfg.max_instances < cfg.min_instances)
    throw std::invalid_argument("bad instance count range");
  if (cfg.min_depth_m <= 0.0 || cfg.max_depth_m <= cfg.min_depth_m)
    throw std::invalid_argument("bad depth range");
  if (cfg.overlap_prob < 0.0 || cfg.overlap_prob > 1.0)
    throw std::invalid_argument("overlap_prob must be in [0,1]");
  if (cfg.rig.focal_length_px <= 0.0 || cfg.rig.baseline_m <= 0.0)
    throw std::invalid_argument("bad stereo rig");
}

struct Placement {
  std::vector<Shape> shapes;
  int forced_a = -1, forced_b = -1;
};

Placement place_shapes(Rng& rng, const SceneConfig& cfg, int n_inst,
                       bool force_overlap) {
  Placement pl;
  for (int i = 0; i < n_inst; ++i) {
    int category = rng.uniform_int(kNumCategories);
    Shape s{};
    bool ok = false;
    for (int tries = 0; tries < 100 && !ok; ++tries) {
      s = sample_shape(rng, cfg, category);
      ok = true;
      for (const Shape& other : pl.shapes)
        if (box_iou(s.bound(), other.bound()) >= kSeparationIou) {
          ok = false;
          break;
        }
    }
    if (ok) pl.shapes.push_back(s);
  }
  if (pl.shapes.empty())
    pl.shapes.push_back(sample_shape(rng, cfg, rng.uniform_int(kNumCategories)));

  if (force_overlap) {
    // A same-category companion, clearly offset in depth, boxes overlapping.
    int anchor = rng.uniform_int(static_cast<int>(pl.shapes.size()));
    const Shape a = pl.shapes[anchor];
    for (int tries = 0; tries < 100; ++tries) {
      Shape b = a;
      b.cx = a.cx + rng.uniform(-0.8, 0.8) * a.rx * 2.0;
      b.cy = a.cy + rng.uniform(-0.6, 0.6) * a.ry * 2.0;
      b.cx = std::clamp(b.cx, b.rx, cfg.width - b.rx);
      b.cy = std::clamp(b.cy, b.ry, cfg.height - b.ry);
      double lo = a.depth_m * kMinDepthRatio;
      b.depth_m = lo <= cfg.max_depth_m * 1.5
                      ? rng.uniform(lo, cfg.max_depth_m * 1.5)
                      : a.depth_m / kMinDepthRatio;
      b.color_jitter = rng.uniform_int(48);
      if (box_iou(a.bound(), b.bound()) >= kOverlapIouFloor + 0.05) {
        pl.forced_a = anchor;
        pl.forced_b = static_cast<int>(pl.shapes.size());
        pl.shapes.push_back(b);
        break;
      }
    }
  }
  return pl;
}

}  // namespace

SceneConfig SceneConfig::with_size(int w, int h) {
  SceneConfig cfg;
  cfg.width = w;
  cfg.height = h;
  cfg.rig = StereoRig{3300.0 * w / 3072.0, 0.5};
  return cfg;
}

SceneRecord generate_scene(const SceneConfig& cfg, uint64_t seed) {
  validate(cfg);
  Rng rng(seed);
  const int w = cfg.width, h = cfg.height;

  for (int attempt = 0; attempt < 64; ++attempt) {
    int n_inst =
        cfg.min_instances + rng.uniform_int(cfg.max_instances -
                                            cfg.min_instances + 1);
    bool force_overlap = rng.uniform() < cfg.overlap_prob;
    Placement pl = place_shapes(rng, cfg, n_inst, force_overlap);
    if (force_overlap && pl.forced_b < 0) continue;

    // Render with depth ordering: the nearest shape wins each pixel.
    std::vector<uint8_t> inst(static_cast<size_t>(w) * h, 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double best_depth = 0.0;
        int best = 0;
        for (size_t si = 0; si < pl.shapes.size(); ++si) {
          const Shape& s = pl.shapes[si];
          if (!s.contains(x + 0.5, y + 0.5)) continue;
          if (best == 0 || s.depth_m < best_depth) {
            best = static_cast<int>(si) + 1;
            best_depth = s.depth_m;
          }
        }
        inst[static_cast<size_t>(y) * w + x] = static_cast<uint8_t>(best);
      }

    // Tight boxes over visible pixels; drop shapes that are mostly hidden.
    std::vector<int> min_x(pl.shapes.size(), w), max_x(pl.shapes.size(), -1);
    std::vector<int> min_y(pl.shapes.size(), h), max_y(pl.shapes.size(), -1);
    std::vector<int> count(pl.shapes.size(), 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int id = inst[static_cast<size_t>(y) * w + x];
        if (id == 0) continue;
        int si = id - 1;
        min_x[si] = std::min(min_x[si], x);
        max_x[si] = std::max(max_x[si], x);
        min_y[si] = std::min(min_y[si], y);
        max_y[si] = std::max(max_y[si], y);
        ++count[si];
      }
    std::vector<int> keep_id(pl.shapes.size(), 0);
    std::vector<InstanceGt> instances;
    std::vector<RoiBox> boxes;
    for (size_t si = 0; si < pl.shapes.size(); ++si) {
      if (count[si] < kMinVisiblePixels) continue;
      keep_id[si] = static_cast<int>(instances.size()) + 1;
      InstanceGt gt;
      gt.category = pl.shapes[si].category;
      gt.box = RoiBox{static_cast<double>(min_x[si]),
                      static_cast<double>(min_y[si]),
                      static_cast<double>(max_x[si] + 1),
                      static_cast<double>(max_y[si] + 1)};
      gt.depth_m = pl.shapes[si].depth_m;
      instances.push_back(gt);
      boxes.push_back(gt.box);
    }
    if (instances.empty()) continue;

    // Re-check spacing on the rendered boxes.
    bool ok = true;
    for (size_t i = 0; i < boxes.size() && ok; ++i)
      for (size_t j = i + 1; j < boxes.size() && ok; ++j) {
        bool forced = pl.forced_b >= 0 &&
                      ((keep_id[pl.forced_a] == static_cast<int>(i) + 1 &&
                        keep_id[pl.forced_b] == static_cast<int>(j) + 1) ||
                       (keep_id[pl.forced_a] == static_cast<int>(j) + 1 &&
                        keep_id[pl.forced_b] == static_cast<int>(i) + 1));
        double iou = box_iou(boxes[i], boxes[j]);
        if (forced)
          ok = iou >= kOverlapIouFloor;
        else
          ok = iou < kSeparationIou;
      }
    if (force_overlap &&
        (pl.forced_a < 0 || keep_id[pl.forced_a] == 0 ||
         keep_id[pl.forced_b] == 0))
      ok = false;
    if (!ok) continue;

    SceneRecord scene;
    scene.rig = cfg.rig;
    scene.image.width = w;
    scene.image.height = h;
    scene.image.rgb.assign(static_cast<size_t>(w) * h * 3, 0);
    scene.disparity.width = w;
    scene.disparity.height = h;
    scene.disparity.values.assign(static_cast<size_t>(w) * h, 0.0);
    scene.disparity.valid.assign(static_cast<size_t>(w) * h, 0);
    scene.instance_map.assign(static_cast<size_t>(w) * h, 0);
    scene.instances = instances;

    const double bg_depth = cfg.max_depth_m * 2.0;
    const int sky_rows = static_cast<int>(kSkyFraction * h);
    // Quantize to the dataset's 1/256 px fixed point at render time so the
    // in-memory scene and its stored form are identical.
    auto quantize = [](double d) { return std::round(d * 256.0) / 256.0; };
    const uint32_t salt = static_cast<uint32_t>(seed & 0xffffffffu);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        size_t q = static_cast<size_t>(y) * w + x;
        int raw = inst[q];
        int id = raw == 0 ? 0 : keep_id[raw - 1];
        scene.instance_map[q] = static_cast<uint8_t>(id);
        uint32_t noise = pixel_hash(x, y, salt);
        uint8_t* px = scene.image.px(y, x);
        if (id > 0) {
          const Shape& s = pl.shapes[raw - 1];
          uint8_t col[3];
          base_color(s.category, s.color_jitter, col);
          for (int c = 0; c < 3; ++c) {
            int v = col[c] + static_cast<int>((noise >> (c * 5)) & 31) - 16;
            px[c] = static_cast<uint8_t>(std::clamp(v, 0, 255));
          }
          scene.disparity.values[q] =
              quantize(depth_to_disparity(s.depth_m, cfg.rig));
          scene.disparity.valid[q] = 1;
        } else {
          int shade = 96 + (y * 48) / h + static_cast<int>(noise & 15);
          for (int c = 0; c < 3; ++c)
            px[c] = static_cast<uint8_t>(std::clamp(shade + c * 4, 0, 255));
          if (y >= sky_rows) {
            scene.disparity.values[q] =
                quantize(depth_to_disparity(bg_depth, cfg.rig));
            scene.disparity.valid[q] = 1;
          }  // sky rows stay invalid
        }
      }
    return scene;
  }
  throw std::runtime_error("scene generation failed to satisfy constraints");
}

std::vector<Proposal> make_proposals(const SceneRecord& scene, uint64_t seed,
                                     double jitter, int negatives_per_image,
                                     int copies_per_instance) {
  if (scene.instances.empty())
    throw std::invalid_argument("scene has no instances");
  Rng rng(seed);
  const int w = scene.image.width, h = scene.image.height;
  std::vector<Proposal> out;

  for (size_t gi = 0; gi < scene.instances.size(); ++gi) {
    const InstanceGt& gt = scene.instances[gi];
    for (int copy = 0; copy < copies_per_instance; ++copy) {
      RoiBox box = gt.box;
      bool ok = false;
      for (int tries = 0; tries < 100 && !ok; ++tries) {
        double bw = gt.box.width(), bh = gt.box.height();
        box = RoiBox{gt.box.x0 + rng.uniform(-jitter, jitter) * bw,
                     gt.box.y0 + rng.uniform(-jitter, jitter) * bh,
                     gt.box.x1 + rng.uniform(-jitter, jitter) * bw,
                     gt.box.y1 + rng.uniform(-jitter, jitter) * bh}
                  .clipped(w, h);
        ok = box.area() > 0.0 && box_iou(box, gt.box) >= 0.5;
      }
      if (!ok) box = gt.box;  // fall back to the exact ground-truth box
      Proposal p;
      p.box = box;
      p.matched_gt = static_cast<int>(gi);
      p.label = gt.category;
      out.push_back(p);
    }
  }

  for (int neg = 0; neg < negatives_per_image; ++neg) {
    for (int tries = 0; tries < 100; ++tries) {
      double bw = rng.uniform(0.1, 0.4) * w;
      double bh = rng.uniform(0.1, 0.4) * h;
      double x0 = rng.uniform(0.0, w - bw);
      double y0 = rng.uniform(0.0, h - bh);
      RoiBox box{x0, y0, x0 + bw, y0 + bh};
      double max_iou = 0.0;
      for (const InstanceGt& gt : scene.instances)
        max_iou = std::max(max_iou, box_iou(box, gt.box));
      if (max_iou < 0.3) {
        Proposal p;
        p.box = box;
        p.label = kNumCategories;
        out.push_back(p);
        break;
      }
    }
  }
  return out;
}

}  // namespace geoseg
