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

#include <algorithm>

#include "geoseg/fusion.hpp"
#include "geoseg/rng.hpp"

using namespace geoseg;

namespace {

ScoredMask uniform(double value, double score, int g = 14) {
  return {ProbMask(g, value), score};
}

ScoredMask random_scored(Rng& rng, int g = 14) {
  ScoredMask s;
  s.mask = ProbMask(g);
  for (double& v : s.mask.p) v = rng.uniform();
  s.score = rng.uniform(0.05, 1.0);
  return s;
}

}  // namespace

TEST_CASE("equal scores average the masks") {
  Rng rng(1);
  ScoredMask a = random_scored(rng);
  ScoredMask b = random_scored(rng);
  b.score = a.score;
  ScoredMask f = fuse_pair(a, b);
  for (int i = 0; i < 196; ++i)
    CHECK(f.mask.p[i] ==
          doctest::Approx((a.mask.p[i] + b.mask.p[i]) / 2).epsilon(1e-12));
  CHECK(f.score == doctest::Approx(a.score).epsilon(1e-12));
}

TEST_CASE("hand case: 0.8/0.6 against 0.4/0.2 fuses to 0.7/0.5") {
  ScoredMask f = fuse_pair(uniform(0.8, 0.6), uniform(0.4, 0.2));
  for (double v : f.mask.p) CHECK(std::abs(v - 0.7) < 1e-12);
  CHECK(std::abs(f.score - 0.5) < 1e-12);
}

TEST_CASE("hand case: three-way fusion reaches 0.8") {
  ScoredMask f =
      fuse_all(uniform(0.9, 0.5), uniform(0.8, 0.6), uniform(0.4, 0.2));
  for (double v : f.mask.p) CHECK(std::abs(v - 0.8) < 1e-12);
  // Intermediate disparity-side fusion is (0.7, 0.5); final score is
  // 0.5*0.5 + 0.5*0.5.
  CHECK(std::abs(f.score - 0.5) < 1e-12);
}

TEST_CASE("identical masks are a fixed point") {
  Rng rng(2);
  ScoredMask a = random_scored(rng);
  ScoredMask b = a;
  b.score = 0.77;
  ScoredMask f = fuse_pair(a, b);
  for (int i = 0; i < 196; ++i)
    CHECK(f.mask.p[i] == doctest::Approx(a.mask.p[i]).epsilon(1e-12));

  ScoredMask f3 = fuse_all(a, a, b);
  for (int i = 0; i < 196; ++i)
    CHECK(f3.mask.p[i] == doctest::Approx(a.mask.p[i]).epsilon(1e-12));
}

TEST_CASE("fusion is convex cell-wise and in score") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    ScoredMask a = random_scored(rng);
    ScoredMask b = random_scored(rng);
    ScoredMask f = fuse_pair(a, b);
    for (int i = 0; i < 196; ++i) {
      CHECK(f.mask.p[i] >= std::min(a.mask.p[i], b.mask.p[i]) - 1e-12);
      CHECK(f.mask.p[i] <= std::max(a.mask.p[i], b.mask.p[i]) + 1e-12);
    }
    CHECK(f.score >= std::min(a.score, b.score) - 1e-12);
    CHECK(f.score <= std::max(a.score, b.score) + 1e-12);
  }
}

TEST_CASE("fuse_pair is symmetric") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    ScoredMask a = random_scored(rng);
    ScoredMask b = random_scored(rng);
    ScoredMask ab = fuse_pair(a, b);
    ScoredMask ba = fuse_pair(b, a);
    for (int i = 0; i < 196; ++i)
      CHECK(ab.mask.p[i] == doctest::Approx(ba.mask.p[i]).epsilon(1e-12));
    CHECK(ab.score == doctest::Approx(ba.score).epsilon(1e-12));
  }
}

TEST_CASE("scaling both scores rescales the score but not the mask") {
  Rng rng(5);
  ScoredMask a = random_scored(rng);
  ScoredMask b = random_scored(rng);
  ScoredMask f1 = fuse_pair(a, b);
  ScoredMask a2 = a, b2 = b;
  a2.score *= 3.7;
  b2.score *= 3.7;
  ScoredMask f2 = fuse_pair(a2, b2);
  for (int i = 0; i < 196; ++i)
    CHECK(f2.mask.p[i] == doctest::Approx(f1.mask.p[i]).epsilon(1e-12));
  CHECK(f2.score == doctest::Approx(3.7 * f1.score).epsilon(1e-9));
}

TEST_CASE("zero-score fallback weights equally") {
  ScoredMask f = fuse_pair(uniform(0.2, 0.0), uniform(0.6, 0.0));
  for (double v : f.mask.p) CHECK(v == doctest::Approx(0.4).epsilon(1e-12));

  // Dead disparity masks leave the full weight on the image mask.
  ScoredMask f3 =
      fuse_all(uniform(0.9, 0.5), uniform(0.1, 0.0), uniform(0.3, 0.0));
  for (double v : f3.mask.p) CHECK(v == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("fuse_all is pinned to the specified grouping") {
  // Regrouping (fuse 2D with 2.5D first) changes the result, so the order
  // itself is load-bearing and asserted here.
  ScoredMask m2d = uniform(0.9, 0.5);
  ScoredMask m25 = uniform(0.8, 0.6);
  ScoredMask m3 = uniform(0.4, 0.2);
  ScoredMask specified = fuse_all(m2d, m25, m3);
  ScoredMask regrouped = fuse_pair(fuse_pair(m2d, m25), m3);
  CHECK(specified.mask.p[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(std::abs(specified.mask.p[0] - regrouped.mask.p[0]) > 1e-6);
}

TEST_CASE("binarize ties, values, and idempotence") {
  ProbMask m(2);
  m.p = {0.5, 0.49, 0.51, 0.0};
  std::vector<uint8_t> b = binarize(m);
  CHECK(b == std::vector<uint8_t>{1, 0, 1, 0});

  ProbMask again(2);
  for (int i = 0; i < 4; ++i) again.p[i] = b[i];
  CHECK(binarize(again) == b);

  CHECK(binarize(m, 0.2) == std::vector<uint8_t>{1, 1, 1, 0});
}
