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

#include "geoseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>

namespace geoseg::eval {

namespace {

constexpr double kThresholds[] = {0.50, 0.55, 0.60, 0.65, 0.70,
                                  0.75, 0.80, 0.85, 0.90, 0.95};

enum class Area { kAll, kSmall, kLarge };

bool in_area_range(int64_t area, Area a, double image_area) {
  switch (a) {
    case Area::kAll:
      return true;
    case Area::kSmall:
      return static_cast<double>(area) < image_area / 64.0;
    case Area::kLarge:
      return static_cast<double>(area) > image_area / 9.0;
  }
  return true;
}

std::vector<int> rank_order(const std::vector<Detection>& dets) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    double sa = ranking_score(dets[a]);
    double sb = ranking_score(dets[b]);
    if (sa != sb) return sa > sb;
    return dets[a].id < dets[b].id;
  });
  return order;
}

struct Group {  // detections and gts sharing (image, category)
  std::vector<int> det_ids;  // indices into the global det array, rank order
  std::vector<int> gt_ids;
  std::vector<std::vector<double>> iou;  // [det][gt]
};

struct Prepared {
  std::vector<BinMask> det_masks;  // pasted to image frame (mask mode)
  std::map<std::pair<int, int>, Group> groups;
  std::vector<int64_t> gt_area;
};

Prepared prepare(const std::vector<Detection>& dets,
                 const std::vector<GroundTruth>& gts, int image_w,
                 int image_h, bool box_mode) {
  Prepared prep;
  if (!box_mode) {
    prep.det_masks.reserve(dets.size());
    for (const auto& d : dets)
      prep.det_masks.push_back(paste_mask(d.mask, d.box, image_w, image_h));
  }
  prep.gt_area.reserve(gts.size());
  for (const auto& g : gts)
    prep.gt_area.push_back(box_mode ? static_cast<int64_t>(g.box.area())
                                    : g.mask.area());

  std::vector<int> order = rank_order(dets);
  for (int di : order)
    prep.groups[{dets[di].image_id, dets[di].category}].det_ids.push_back(di);
  for (size_t gi = 0; gi < gts.size(); ++gi)
    prep.groups[{gts[gi].image_id, gts[gi].category}].gt_ids.push_back(
        static_cast<int>(gi));

  for (auto& [key, grp] : prep.groups) {
    grp.iou.assign(grp.det_ids.size(),
                   std::vector<double>(grp.gt_ids.size(), 0.0));
    for (size_t i = 0; i < grp.det_ids.size(); ++i)
      for (size_t j = 0; j < grp.gt_ids.size(); ++j) {
        const Detection& d = dets[grp.det_ids[i]];
        const GroundTruth& g = gts[grp.gt_ids[j]];
        grp.iou[i][j] = box_mode ? box_iou(d.box, g.box)
                                 : mask_iou(prep.det_masks[grp.det_ids[i]],
                                            g.mask);
      }
  }
  return prep;
}

// Greedy match for one (threshold, area range). Outputs, per global det id:
// 1 = TP, 0 = FP, -1 = ignore (matched an out-of-range gt). Out-of-range gts
// can absorb detections but never count toward recall.
void match_group(const Group& grp, const Prepared& prep, double thr, Area area,
                 double image_area, std::vector<int>* flags) {
  std::vector<char> gt_used(grp.gt_ids.size(), 0);
  for (size_t i = 0; i < grp.det_ids.size(); ++i) {
    int best = -1;
    double best_iou = 0.0;
    // Prefer in-range gts; fall back to ignore gts.
    for (int pass = 0; pass < 2 && best < 0; ++pass) {
      for (size_t j = 0; j < grp.gt_ids.size(); ++j) {
        if (gt_used[j]) continue;
        bool in_range =
            in_area_range(prep.gt_area[grp.gt_ids[j]], area, image_area);
        if ((pass == 0) != in_range) continue;
        if (grp.iou[i][j] < thr) continue;
        if (best < 0 || grp.iou[i][j] > best_iou) {  // ties keep the first gt
          best_iou = grp.iou[i][j];
          best = static_cast<int>(j);
        }
      }
    }
    int flag = 0;
    if (best >= 0) {
      gt_used[best] = 1;
      flag = in_area_range(prep.gt_area[grp.gt_ids[best]], area, image_area)
                 ? 1
                 : -1;
    }
    (*flags)[grp.det_ids[i]] = flag;
  }
}

/// 101-point interpolated AP from ranked TP/FP flags. n_pos > 0.
double interpolated_ap(const std::vector<int>& ranked_flags, int n_pos) {
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (int f : ranked_flags) {
    if (f < 0) continue;
    if (f == 1)
      ++tp;
    else
      ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / n_pos);
  }
  // Precision envelope: monotone non-increasing from the right.
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
    precision[i] = std::max(precision[i], precision[i + 1]);
  double sum = 0.0;
  for (int r = 0; r <= 100; ++r) {
    double rr = r / 100.0;
    auto it = std::lower_bound(recall.begin(), recall.end(), rr);
    if (it != recall.end())
      sum += precision[static_cast<size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

}  // namespace

double mask_iou(const BinMask& a, const BinMask& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("mask_iou: shape mismatch");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    bool pa = a.v[i] != 0, pb = b.v[i] != 0;
    inter += (pa && pb) ? 1 : 0;
    uni += (pa || pb) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

double ranking_score(const Detection& d) { return d.box_score * d.mask_score; }

BinMask paste_mask(const BinMask& mask, const RoiBox& box, int image_w,
                   int image_h) {
  BinMask out;
  out.width = image_w;
  out.height = image_h;
  out.v.assign(static_cast<size_t>(image_w) * image_h, 0);
  RoiBox b = box.clipped(image_w, image_h);
  int x0 = static_cast<int>(std::floor(b.x0));
  int y0 = static_cast<int>(std::floor(b.y0));
  int x1 = static_cast<int>(std::ceil(b.x1));
  int y1 = static_cast<int>(std::ceil(b.y1));
  if (mask.width == 0 || mask.height == 0 || b.area() <= 0.0) return out;
  for (int y = std::max(0, y0); y < std::min(image_h, y1); ++y)
    for (int x = std::max(0, x0); x < std::min(image_w, x1); ++x) {
      double mx = (x + 0.5 - b.x0) / b.width() * mask.width;
      double my = (y + 0.5 - b.y0) / b.height() * mask.height;
      int mi = std::clamp(static_cast<int>(my), 0, mask.height - 1);
      int mj = std::clamp(static_cast<int>(mx), 0, mask.width - 1);
      if (mask.at(mi, mj))
        out.v[static_cast<size_t>(y) * image_w + x] = 1;
    }
  return out;
}

std::vector<int> match_and_score(const std::vector<Detection>& dets,
                                 const std::vector<GroundTruth>& gts,
                                 double iou_threshold, int image_w,
                                 int image_h, bool box_mode) {
  Prepared prep = prepare(dets, gts, image_w, image_h, box_mode);
  std::vector<int> flags(dets.size(), 0);
  double image_area = static_cast<double>(image_w) * image_h;
  for (const auto& [key, grp] : prep.groups)
    match_group(grp, prep, iou_threshold, Area::kAll, image_area, &flags);
  return flags;
}

EvalResult coco_ap(const std::vector<Detection>& dets,
                   const std::vector<GroundTruth>& gts, int image_w,
                   int image_h, bool box_mode) {
  if (gts.empty()) throw std::invalid_argument("coco_ap: no ground truth");
  Prepared prep = prepare(dets, gts, image_w, image_h, box_mode);
  double image_area = static_cast<double>(image_w) * image_h;
  std::vector<int> order = rank_order(dets);

  std::vector<int> categories;
  for (const auto& g : gts)
    if (std::find(categories.begin(), categories.end(), g.category) ==
        categories.end())
      categories.push_back(g.category);
  std::sort(categories.begin(), categories.end());

  EvalResult res;
  for (const auto& g : gts) {
    int64_t a = box_mode ? static_cast<int64_t>(g.box.area()) : g.mask.area();
    if (in_area_range(a, Area::kSmall, image_area)) ++res.gt_small;
    if (in_area_range(a, Area::kLarge, image_area)) ++res.gt_large;
  }

  // ap_over(threshold set, area range) -> mean over categories present.
  auto ap_over = [&](const std::vector<double>& thrs, Area area) {
    double total = 0.0;
    int n_cat = 0;
    for (int cat : categories) {
      int n_pos = 0;
      for (const auto& g : gts) {
        int64_t a =
            box_mode ? static_cast<int64_t>(g.box.area()) : g.mask.area();
        if (g.category == cat && in_area_range(a, area, image_area)) ++n_pos;
      }
      if (n_pos == 0) continue;
      ++n_cat;
      double cat_ap = 0.0;
      for (double thr : thrs) {
        std::vector<int> flags(dets.size(), 0);
        for (const auto& [key, grp] : prep.groups) {
          if (key.second != cat) continue;
          match_group(grp, prep, thr, area, image_area, &flags);
        }
        std::vector<int> ranked;
        for (int di : order)
          if (dets[di].category == cat) ranked.push_back(flags[di]);
        cat_ap += interpolated_ap(ranked, n_pos);
      }
      total += cat_ap / thrs.size();
    }
    return n_cat > 0 ? 100.0 * total / n_cat : 0.0;
  };

  std::vector<double> all_thrs(std::begin(kThresholds), std::end(kThresholds));
  res.ap = ap_over(all_thrs, Area::kAll);
  res.ap50 = ap_over({0.50}, Area::kAll);
  res.ap75 = ap_over({0.75}, Area::kAll);
  res.ap_s = ap_over(all_thrs, Area::kSmall);
  res.ap_l = ap_over(all_thrs, Area::kLarge);
  return res;
}

std::string format_table(const EvalResult& mask_ap, const EvalResult& box_ap) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%-8s %6s %6s %6s %6s %6s\n"
                "%-8s %6.1f %6.1f %6.1f %6.1f %6.1f\n"
                "%-8s %6.1f %6.1f %6.1f %6.1f %6.1f\n",
                "metric", "AP", "AP50", "AP75", "AP_S", "AP_L",  //
                "mask", mask_ap.ap, mask_ap.ap50, mask_ap.ap75, mask_ap.ap_s,
                mask_ap.ap_l,  //
                "bbox", box_ap.ap, box_ap.ap50, box_ap.ap75, box_ap.ap_s,
                box_ap.ap_l);
  return buf;
}

}  // namespace geoseg::eval
