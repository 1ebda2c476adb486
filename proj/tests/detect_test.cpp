/* Copyright 2026 The dfx Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "dfx/detect.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <tuple>

#include "dfx/error.hpp"

namespace dfx {
namespace {

// Exhaustive scan: every pixel compared against an explicit neighbour
// list, then a full sort on (-score, class, y, x).
std::vector<Peak> oracle_peaks(const FloatTensor& hm, std::size_t k) {
  const Shape4& s = hm.shape();
  std::vector<Peak> all;
  const int ny[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
  const int nx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
  for (std::int64_t c = 0; c < s.c; ++c)
    for (std::int64_t y = 0; y < s.h; ++y)
      for (std::int64_t x = 0; x < s.w; ++x) {
        bool ok = true;
        for (int i = 0; i < 8; ++i) {
          const std::int64_t yy = y + ny[i];
          const std::int64_t xx = x + nx[i];
          if (s.contains(0, yy, xx, c) && !(hm.at(0, y, x, c) >= hm.at(0, yy, xx, c))) ok = false;
        }
        if (ok) all.push_back({static_cast<int>(c), static_cast<int>(x), static_cast<int>(y), hm.at(0, y, x, c)});
      }
  std::sort(all.begin(), all.end(), [](const Peak& a, const Peak& b) {
    return std::make_tuple(-a.score, a.cls, a.y, a.x) < std::make_tuple(-b.score, b.cls, b.y, b.x);
  });
  if (all.size() > k) all.resize(k);
  return all;
}

TEST(FindPeaksTest, SinglePositivePixel) {
  FloatTensor hm(Shape4{1, 9, 9, 3}, 0.0F);
  hm.at(0, 4, 7, 2) = 0.8F;
  const auto peaks = find_peaks(hm, 1);
  ASSERT_EQ(peaks.size(), 1U);
  EXPECT_EQ(peaks[0], (Peak{2, 7, 4, 0.8F}));
  // Without the cap, the zero plateaus of other classes also qualify.
  FloatTensor one(Shape4{1, 9, 9, 1}, 0.0F);
  one.at(0, 4, 7, 0) = 0.8F;
  const auto all = find_peaks(one);
  EXPECT_EQ(all[0], (Peak{0, 7, 4, 0.8F}));
  for (std::size_t i = 1; i < all.size(); ++i) EXPECT_EQ(all[i].score, 0.0F);
}

TEST(FindPeaksTest, ConstantMapPlateau) {
  const FloatTensor hm(Shape4{1, 12, 12, 2}, 0.5F);
  const auto peaks = find_peaks(hm);
  ASSERT_EQ(peaks.size(), 100U);
  EXPECT_EQ(peaks, oracle_peaks(hm, 100));
  EXPECT_EQ(peaks[0], (Peak{0, 0, 0, 0.5F}));
  EXPECT_EQ(peaks[1], (Peak{0, 1, 0, 0.5F}));
}

TEST(FindPeaksTest, TopHundredOfIsolatedPeaks) {
  FloatTensor hm(Shape4{1, 60, 60, 1}, 0.0F);
  std::vector<float> scores;
  for (int i = 0; i < 150; ++i) {
    const float v = 0.1F + 0.005F * static_cast<float>(i);
    hm.at(0, (i / 15) * 6 + 1, (i % 15) * 4 + 1, 0) = v;
    scores.push_back(v);
  }
  const auto peaks = find_peaks(hm, 100);
  ASSERT_EQ(peaks.size(), 100U);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(peaks[i].score, scores[149 - i]);
}

TEST(FindPeaksTest, RandomEightBitMapsMatchExhaustiveScan) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> code(0, 255);
  for (int trial = 0; trial < 100; ++trial) {
    FloatTensor hm(Shape4{1, 64, 64, 20});
    for (float& v : hm.data()) v = static_cast<float>(code(rng)) / 255.0F;
    ASSERT_EQ(find_peaks(hm), oracle_peaks(hm, 100)) << "trial " << trial;
  }
}

TEST(DecodeTest, WorkedExample) {
  FloatTensor off(Shape4{1, 16, 16, 2}, 0.0F);
  FloatTensor size(Shape4{1, 16, 16, 2}, 0.0F);
  off.at(0, 12, 10, 0) = 0.2F;
  off.at(0, 12, 10, 1) = -0.1F;
  size.at(0, 12, 10, 0) = 4.0F;
  size.at(0, 12, 10, 1) = 6.0F;
  const auto dets = decode({Peak{3, 10, 12, 0.9F}}, off, size, 1);
  ASSERT_EQ(dets.size(), 1U);
  EXPECT_NEAR(dets[0].box.x1, 8.2, 1e-6);
  EXPECT_NEAR(dets[0].box.y1, 8.9, 1e-6);
  EXPECT_NEAR(dets[0].box.x2, 12.2, 1e-6);
  EXPECT_NEAR(dets[0].box.y2, 14.9, 1e-6);
  EXPECT_EQ(dets[0].cls, 3);
  EXPECT_FLOAT_EQ(static_cast<float>(dets[0].confidence), 0.9F);
  const auto scaled = decode({Peak{3, 10, 12, 0.9F}}, off, size, 4);
  EXPECT_NEAR(scaled[0].box.x1, 4 * 8.2, 1e-5);
  EXPECT_NEAR(scaled[0].box.y2, 4 * 14.9, 1e-5);
}

TEST(DecodeTest, DegenerateBoxAtPeak) {
  const FloatTensor zero(Shape4{1, 8, 8, 2}, 0.0F);
  const auto d = decode({Peak{0, 5, 2, 0.5F}}, zero, zero);
  EXPECT_EQ(d[0].box, (Box{20, 8, 20, 8}));
}

TEST(DecodeTest, TranslationEquivariance) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<float> u(0.0F, 5.0F);
  FloatTensor off(Shape4{1, 20, 20, 2});
  FloatTensor size(Shape4{1, 20, 20, 2});
  for (float& v : off.data()) v = u(rng) / 5.0F - 0.5F;
  for (float& v : size.data()) v = u(rng);
  // Constant heads so the peak can move.
  for (std::int64_t y = 0; y < 20; ++y)
    for (std::int64_t x = 0; x < 20; ++x)
      for (std::int64_t c = 0; c < 2; ++c) {
        off.at(0, y, x, c) = off.at(0, 0, 0, c);
        size.at(0, y, x, c) = size.at(0, 0, 0, c);
      }
  const Box a = decode({Peak{0, 3, 4, 1}}, off, size)[0].box;
  const Box b = decode({Peak{0, 8, 6, 1}}, off, size)[0].box;
  EXPECT_NEAR(b.x1 - a.x1, 20, 1e-9);
  EXPECT_NEAR(b.x2 - a.x2, 20, 1e-9);
  EXPECT_NEAR(b.y1 - a.y1, 8, 1e-9);
  EXPECT_NEAR(b.y2 - a.y2, 8, 1e-9);
}

TEST(IouTest, Examples) {
  const Box a{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(iou(a, Box{2, 2, 3, 3}), 0.0);
  EXPECT_DOUBLE_EQ(iou(a, Box{0.5, 0, 1.5, 1}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou(Box{1, 1, 1, 1}, Box{1, 1, 1, 1}), 0.0);
}

TEST(IouTest, SymmetricAndBounded) {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0, 10);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng), y = u(rng), x2 = u(rng), y2 = u(rng);
    const Box a{std::min(x, x2), std::min(y, y2), std::max(x, x2), std::max(y, y2)};
    const double p = u(rng), q = u(rng);
    const Box b{p, q, p + u(rng), q + u(rng)};
    EXPECT_DOUBLE_EQ(iou(a, b), iou(b, a));
    EXPECT_GE(iou(a, b), 0.0);
    EXPECT_LE(iou(a, b), 1.0);
  }
}

// Precision/recall at every cut-off of the ranking, then for each recall
// level the best precision at that recall or beyond.
double oracle_ap(const std::vector<bool>& hits, int n_gt) {
  std::vector<double> p, r;
  int tp = 0;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    tp += hits[k] ? 1 : 0;
    p.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    r.push_back(static_cast<double>(tp) / n_gt);
  }
  double ap = 0;
  for (int level = 1; level <= n_gt; ++level) {
    const double rl = static_cast<double>(level) / n_gt;
    double best = 0;
    for (std::size_t k = 0; k < p.size(); ++k)
      if (r[k] >= rl - 1e-12) best = std::max(best, p[k]);
    ap += best / n_gt;
  }
  return ap;
}

TEST(Ap50Test, PerfectAndDisjoint) {
  const std::vector<GroundTruth> gts = {{0, {0, 0, 10, 10}}, {1, {20, 20, 30, 40}}, {0, {50, 50, 60, 60}}};
  std::vector<Detection> perfect;
  for (const auto& g : gts) perfect.push_back({g.cls, 0.9, g.box});
  EXPECT_EQ(ap50(perfect, gts), 1.0);
  std::vector<Detection> disjoint;
  for (const auto& g : gts) disjoint.push_back({g.cls, 0.9, Box{g.box.x1 + 100, g.box.y1, g.box.x2 + 100, g.box.y2}});
  EXPECT_EQ(ap50(disjoint, gts), 0.0);
  EXPECT_THROW(ap50(perfect, {}), ParamError);
}

TEST(Ap50Test, HitMissHitMatchesEnumeration) {
  const std::vector<GroundTruth> gts = {{0, {0, 0, 10, 10}}, {0, {20, 0, 30, 10}}};
  const std::vector<Detection> dets = {{0, 0.9, {0, 0, 10, 10}},
                                       {0, 0.8, {100, 0, 110, 10}},
                                       {0, 0.7, {20, 0, 30, 10}}};
  const double want = oracle_ap({true, false, true}, 2);
  EXPECT_NEAR(want, 0.5 * 1.0 + 0.5 * (2.0 / 3.0), 1e-12);
  EXPECT_NEAR(ap50(dets, gts), want, 1e-12);
}

TEST(Ap50Test, RandomRankingsMatchEnumeration) {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 200; ++trial) {
    const int n_gt = std::uniform_int_distribution<int>(1, 6)(rng);
    std::vector<GroundTruth> gts;
    for (int i = 0; i < n_gt; ++i) gts.push_back({0, {i * 20.0, 0, i * 20.0 + 10, 10}});
    std::vector<Detection> dets;
    std::vector<bool> hits;
    std::vector<int> order(static_cast<std::size_t>(n_gt));
    for (int i = 0; i < n_gt; ++i) order[static_cast<std::size_t>(i)] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t next_gt = 0;
    const int n_det = std::uniform_int_distribution<int>(0, 10)(rng);
    for (int k = 0; k < n_det; ++k) {
      const double conf = 1.0 - 0.01 * k;
      if (next_gt < order.size() && std::bernoulli_distribution(0.5)(rng)) {
        const auto& g = gts[static_cast<std::size_t>(order[next_gt++])];
        dets.push_back({0, conf, g.box});
        hits.push_back(true);
      } else {
        dets.push_back({0, conf, Box{1000, 1000, 1010, 1010}});
        hits.push_back(false);
      }
    }
    std::shuffle(dets.begin(), dets.end(), rng);
    EXPECT_NEAR(ap50(dets, gts), oracle_ap(hits, n_gt), 1e-12);
  }
}

TEST(Ap50Test, DuplicateDetectionIsFalsePositive) {
  const std::vector<GroundTruth> gts = {{0, {0, 0, 10, 10}}};
  const std::vector<Detection> dets = {{0, 0.9, {0, 0, 10, 10}}, {0, 0.8, {0, 0, 10, 10}}};
  EXPECT_DOUBLE_EQ(ap50(dets, gts), 1.0);
  const std::vector<Detection> late = {{0, 0.9, {50, 50, 60, 60}}, {0, 0.8, {0, 0, 10, 10}}};
  EXPECT_DOUBLE_EQ(ap50(late, gts), 0.5);
}

TEST(Ap50Test, RankPreservingRescaleInvariant) {
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> u(0, 50);
  std::vector<GroundTruth> gts;
  std::vector<Detection> dets;
  for (int i = 0; i < 20; ++i) {
    const double x = u(rng), y = u(rng);
    gts.push_back({i % 3, {x, y, x + 10, y + 10}});
    dets.push_back({i % 3, u(rng) / 50, {x + u(rng) / 10, y, x + 10, y + 10 + u(rng) / 5}});
    dets.push_back({i % 3, u(rng) / 50, {u(rng), u(rng), 60, 60}});
  }
  std::vector<Detection> squashed = dets;
  for (auto& d : squashed) d.confidence = 0.5 * d.confidence * d.confidence * d.confidence;
  EXPECT_DOUBLE_EQ(ap50(dets, gts), ap50(squashed, gts));
  EXPECT_LE(ap50(dets, gts, ApInterpolation::kElevenPoint), 1.0);
}

TEST(DetectionTextTest, RoundTrip) {
  const std::vector<Detection> dets = {{3, 0.5, {1.25, 2.5, 3.75, 4}}, {0, 0.125, {0, 0, 0, 0}}};
  const std::string text = format_detections(dets);
  EXPECT_EQ(text, "3 1.2500 2.5000 3.7500 4.0000 0.500000\n0 0.0000 0.0000 0.0000 0.0000 0.125000\n");
  EXPECT_EQ(parse_detections(text), dets);
  EXPECT_THROW(parse_detections("1 2 3\n"), FormatError);
  EXPECT_THROW(parse_detections("1 2 3 4 5 6 7\n"), FormatError);
}

}  // namespace
}  // namespace dfx
