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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "geoseg/eval.hpp"
#include "geoseg/losses.hpp"
#include "geoseg/models.hpp"
#include "geoseg/rng.hpp"
#include "gradcheck.hpp"

using namespace geoseg;
using test::gradcheck;

namespace {

ProbMask uniform_mask(double v, int g = 14) {
  ProbMask m(g, v);
  return m;
}

ProbMask random_mask(Rng& rng, int g = 14, double lo = 0.02, double hi = 0.98) {
  ProbMask m(g);
  for (double& v : m.p) v = rng.uniform(lo, hi);
  return m;
}

BinaryGrid random_gt(Rng& rng, int g = 14) {
  BinaryGrid gt(static_cast<size_t>(g) * g);
  for (double& v : gt) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
  return gt;
}

// Independent scalar oracle for the symmetrized cross-entropy.
double corr_oracle(double a, double b) {
  auto h = [](double p, double q) {
    return -(p * std::log(q) + (1 - p) * std::log(1 - q));
  };
  return 0.5 * (h(a, b) + h(b, a));
}

}  // namespace

TEST_CASE("mask bce closed forms") {
  BinaryGrid gt(196, 1.0);
  CHECK(mask_bce(uniform_mask(0.5), gt) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(mask_bce(uniform_mask(0.8), gt) ==
        doctest::Approx(-std::log(0.8)).epsilon(1e-12));

  Rng rng(1);
  BinaryGrid g2 = random_gt(rng);
  ProbMask perfect(14);
  perfect.p = g2;
  CHECK(mask_bce(perfect, g2) <= kLogEps * -std::log(kLogEps) * 1.1);
  CHECK(mask_bce(perfect, g2) >= 0.0);
}

TEST_CASE("mask bce is bounded by |log eps|") {
  BinaryGrid gt(196, 1.0);
  CHECK(mask_bce(uniform_mask(0.0), gt) <= -std::log(kLogEps) + 1e-9);
}

TEST_CASE("continuity loss closed forms") {
  CHECK(continuity_loss(uniform_mask(0.37)) == 0.0);

  ProbMask spike(5, 0.0);
  spike.at(2, 2) = 1.0;
  CHECK(continuity_loss(spike) == doctest::Approx(20.0).epsilon(1e-12));

  ProbMask checker(14);
  for (int i = 0; i < 14; ++i)
    for (int j = 0; j < 14; ++j) checker.at(i, j) = (i + j) % 2;
  CHECK(continuity_loss(checker) > 0.0);
}

TEST_CASE("continuity loss is zero iff the mask is constant") {
  for (double c : {0.0, 0.25, 0.5, 1.0})
    CHECK(continuity_loss(uniform_mask(c)) == 0.0);

  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    ProbMask m = random_mask(rng);
    bool constant = true;
    for (double v : m.p) constant = constant && v == m.p[0];
    double loss = continuity_loss(m);
    if (constant)
      CHECK(loss == 0.0);
    else
      CHECK(loss > 0.0);
  }
}

TEST_CASE("correspondence loss closed forms and symmetry") {
  CHECK(correspondence_loss(uniform_mask(0.5), uniform_mask(0.5)) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(correspondence_loss(uniform_mask(0.9), uniform_mask(0.1)) ==
        doctest::Approx(corr_oracle(0.9, 0.1)).epsilon(1e-12));
  CHECK(corr_oracle(0.9, 0.1) == doctest::Approx(2.083).epsilon(1e-3));

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    ProbMask a = random_mask(rng);
    ProbMask b = random_mask(rng);
    CHECK(correspondence_loss(a, b) ==
          doctest::Approx(correspondence_loss(b, a)).epsilon(1e-12));
    CHECK(correspondence_loss(a, b) >= 0.0);
    CHECK(correspondence_loss(a, b) <= -std::log(kLogEps));
  }
}

TEST_CASE("identical masks reach the entropy floor") {
  Rng rng(4);
  ProbMask a = random_mask(rng);
  double self = correspondence_loss(a, a);
  for (int trial = 0; trial < 10; ++trial)
    CHECK(self <= correspondence_loss(a, random_mask(rng)) + 1e-12);
}

TEST_CASE("maskiou loss and target") {
  Rng rng(5);
  ProbMask pred = random_mask(rng);
  BinaryGrid gt = random_gt(rng);
  double target = maskiou_target(pred, gt);
  CHECK(maskiou_loss(target, pred, gt) == 0.0);
  CHECK(maskiou_loss(0.3, uniform_mask(0.9), BinaryGrid(196, 1.0)) ==
        doctest::Approx((0.3 - 1.0) * (0.3 - 1.0)).epsilon(1e-12));

  // Arithmetic case: predicted 0.3 against target 0.8.
  ProbMask half(14, 0.0);
  BinaryGrid gthalf(196, 0.0);
  // 80 intersection cells out of 100 union cells -> 0.8.
  for (int i = 0; i < 100; ++i) gthalf[i] = 1.0;
  for (int i = 0; i < 80; ++i) half.p[i] = 1.0;
  for (int i = 100; i < 100; ++i) half.p[i] = 1.0;
  CHECK(maskiou_target(half, gthalf) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(maskiou_loss(0.3, half, gthalf) == doctest::Approx(0.25).epsilon(1e-12));

  // Both empty -> target 1.
  CHECK(maskiou_target(uniform_mask(0.1), BinaryGrid(196, 0.0)) == 1.0);
  CHECK(maskiou_loss(1.0, uniform_mask(0.1), BinaryGrid(196, 0.0)) == 0.0);
}

TEST_CASE("maskiou target agrees with the eval module's iou") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    ProbMask pred = random_mask(rng, 14, 0.0, 1.0);
    BinaryGrid gt = random_gt(rng);
    eval::BinMask a, b;
    a.width = a.height = b.width = b.height = 14;
    a.v.resize(196);
    b.v.resize(196);
    for (int i = 0; i < 196; ++i) {
      a.v[i] = pred.p[i] >= 0.5 ? 1 : 0;
      b.v[i] = gt[i] != 0.0 ? 1 : 0;
    }
    CHECK(maskiou_target(pred, gt) == eval::mask_iou(a, b));
  }
}

TEST_CASE("detection losses") {
  std::vector<double> uniform_logits(4, 0.7);
  std::vector<double> deltas(12, 0.3);
  RoiBox prop{2, 2, 8, 8};

  auto [cls_u, box_u] =
      detection_losses(uniform_logits, deltas, 1, 3, prop, prop);
  CHECK(cls_u == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // Perfect deltas (proposal == gt needs zero deltas).
  std::vector<double> zero_deltas(12, 0.0);
  auto [cls_p, box_p] =
      detection_losses(uniform_logits, zero_deltas, 1, 3, prop, prop);
  CHECK(box_p == 0.0);

  // Background proposals never contribute a box loss.
  auto [cls_b, box_b] =
      detection_losses(uniform_logits, deltas, 3, 3, {1, 1, 3, 3}, prop);
  CHECK(box_b == 0.0);
}

TEST_CASE("total loss arithmetic and error naming") {
  LossReport r;
  LossWeights w;
  w.w_box = w.w_cls = w.w_2dmask = w.w_25dmask = w.w_3dmask = 0.0;
  w.w_cont = w.w_corr = w.w_miou = 0.0;
  CHECK(total_loss(r, w) == 0.0);

  r.cont = 0.7;
  w.w_cont = 1.0;
  CHECK(total_loss(r, w) == doctest::Approx(0.7).epsilon(1e-12));

  LossReport r2;
  r2.mask2d = 1.0;
  r2.corr = 2.0;
  LossWeights w2;
  w2.w_box = w2.w_cls = w2.w_25dmask = w2.w_3dmask = w2.w_cont = w2.w_miou = 0.0;
  w2.w_2dmask = 0.5;
  w2.w_corr = 2.0;
  CHECK(total_loss(r2, w2) == doctest::Approx(4.5).epsilon(1e-12));

  LossReport bad;
  bad.mask3d = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(total_loss(bad, LossWeights{}),
                       doctest::Contains("mask3d"), std::runtime_error);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(7);
  const int g = 14;

  SUBCASE("mask bce") {
    BinaryGrid gt = random_gt(rng);
    Tensor m({g, g});
    for (double& v : m.data) v = rng.uniform(0.05, 0.95);
    CHECK(gradcheck(m, [&](ad::Tape& t, ad::Var v) {
            return mask_bce_t(t, v, gt, g);
          }) < 1e-4);
  }

  SUBCASE("continuity") {
    Tensor m({g, g});
    for (double& v : m.data) v = rng.uniform(0.0, 1.0);
    CHECK(gradcheck(m, [&](ad::Tape& t, ad::Var v) {
            return continuity_loss_t(t, v);
          }) < 1e-4);
  }

  SUBCASE("correspondence, both arguments") {
    Tensor a({g, g}), b({g, g});
    for (double& v : a.data) v = rng.uniform(0.05, 0.95);
    for (double& v : b.data) v = rng.uniform(0.05, 0.95);
    CHECK(gradcheck(a, [&](ad::Tape& t, ad::Var v) {
            return correspondence_loss_t(t, v, t.put(b));
          }) < 1e-4);
    CHECK(gradcheck(b, [&](ad::Tape& t, ad::Var v) {
            return correspondence_loss_t(t, t.put(a), v);
          }) < 1e-4);
  }

  SUBCASE("per point bce") {
    std::vector<double> gt(32);
    for (double& v : gt) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    Tensor p({32});
    for (double& v : p.data) v = rng.uniform(0.05, 0.95);
    CHECK(gradcheck(p, [&](ad::Tape& t, ad::Var v) {
            return per_point_bce_t(t, v, gt);
          }) < 1e-4);
  }
}

TEST_CASE("all losses are non-negative on random inputs") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    ProbMask m = random_mask(rng, 14, 0.0, 1.0);
    BinaryGrid gt = random_gt(rng);
    CHECK(mask_bce(m, gt) >= 0.0);
    CHECK(continuity_loss(m) >= 0.0);
    CHECK(correspondence_loss(m, random_mask(rng)) >= 0.0);
    CHECK(maskiou_loss(rng.uniform(), m, gt) >= 0.0);
  }
}
