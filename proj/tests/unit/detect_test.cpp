// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "../support/oracles.hpp"
#include "../support/scenes.hpp"
#include "gbh/detect/decode.hpp"
#include "gbh/detect/nms.hpp"

namespace gbh {
namespace {

const std::vector<model::Anchor> kAnchors = {{10, 13}, {16, 30}, {33, 23}};

using testing::random_head;

TEST(DecodeTest, ZeroOffsetsLandMidCell) {
  Tensor<float> head(Shape{1, 3 * 10, 2, 2}, 0.0f);
  head.at(0, 4, 0, 0) = 20;  // objectness
  head.at(0, 5, 0, 0) = 20;  // class 0
  auto dets = decode_head(head, 0, kAnchors, 8, 0.5);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_DOUBLE_EQ(dets[0].box.cx, 4.0);
  EXPECT_DOUBLE_EQ(dets[0].box.cy, 4.0);
  EXPECT_DOUBLE_EQ(dets[0].box.w, 10.0);
  EXPECT_DOUBLE_EQ(dets[0].box.h, 13.0);
  EXPECT_EQ(dets[0].class_id, 0);
}

TEST(DecodeTest, AnchorMismatchIsSpecError) {
  Tensor<float> head(Shape{1, 31, 2, 2});
  EXPECT_THROW(decode_head(head, 0, kAnchors, 8, 0.25), SpecError);
  EXPECT_THROW(decode(std::vector<Tensor<float>>{random_head(2, 5, 1)}, 0, model::AnchorSet{kAnchors, kAnchors},
                      std::vector<std::size_t>{8}, 0.25),
               SpecError);
}

TEST(DecodeTest, MatchesScalarOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto head = random_head(3, 5, seed);
    for (std::size_t b = 0; b < 2; ++b) {
      auto got = decode_head(head, b, kAnchors, 8, 0.1);
      auto want = oracle::decode_head(head, b, kAnchors, 8, 0.1);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].class_id, want[i].class_id);
        EXPECT_NEAR(got[i].confidence, want[i].confidence, 1e-12);
        EXPECT_NEAR(got[i].box.cx, want[i].box.cx, 1e-9);
        EXPECT_NEAR(got[i].box.cy, want[i].box.cy, 1e-9);
        EXPECT_NEAR(got[i].box.w, want[i].box.w, 1e-9);
        EXPECT_NEAR(got[i].box.h, want[i].box.h, 1e-9);
      }
    }
  }
}

TEST(DecodeTest, MonotoneInObjectness) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto head = random_head(4, 5, seed);
    const auto before = decode_head(head, 0, kAnchors, 8, 0.25).size();
    auto raised = head.clone();
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t p = 0; p < 16; ++p) raised[(a * 10 + 4) * 16 + p] += 1.5f;
    EXPECT_GE(decode_head(raised, 0, kAnchors, 8, 0.25).size(), before);
  }
}

TEST(DecodeTest, StrideFourGivesFourPixelCenterGranularity) {
  Tensor<float> head(Shape{1, 30, 4, 4}, 0.0f);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t p = 0; p < 16; ++p) {
      head[(a * 10 + 4) * 16 + p] = 20;
      head[(a * 10 + 5) * 16 + p] = 20;
    }
  auto dets = decode_head(head, 0, kAnchors, 4, 0.5);
  std::vector<double> xs;
  for (const auto& d : dets) xs.push_back(d.box.cx);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  ASSERT_EQ(xs.size(), 4u);
  for (std::size_t i = 1; i < xs.size(); ++i) EXPECT_DOUBLE_EQ(xs[i] - xs[i - 1], 4.0);
}

TEST(IouTest, HandCases) {
  Box a{0.5, 0.5, 1, 1};
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(iou(a, Box{5, 5, 1, 1}), 0.0);
  EXPECT_NEAR(iou(a, Box{1.0, 0.5, 1, 1}), 1.0 / 3.0, 1e-15);
}

TEST(IouTest, SymmetricAndSelfOne) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(0, 50), ext(0.1, 20);
  for (int i = 0; i < 500; ++i) {
    Box a{pos(rng), pos(rng), ext(rng), ext(rng)}, b{pos(rng), pos(rng), ext(rng), ext(rng)};
    EXPECT_DOUBLE_EQ(iou(a, b), iou(b, a));
    EXPECT_NEAR(iou(a, a), 1.0, 1e-12);
    EXPECT_NEAR(iou(a, b), oracle::corner_iou(a, b), 1e-12);
  }
}

using testing::random_dets;

TEST(NmsTest, SingleAndEmpty) {
  EXPECT_TRUE(nms({}, 0.45).empty());
  Detection d{1, 0.7, {5, 5, 2, 2}};
  auto out = nms({d}, 0.45);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].confidence, 0.7);
}

TEST(NmsTest, IdenticalBoxesKeepHigher) {
  Detection a{0, 0.8, {5, 5, 2, 2}}, b{0, 0.9, {5, 5, 2, 2}};
  auto out = nms({a, b}, 0.45);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].confidence, 0.9);
}

TEST(NmsTest, ClassAware) {
  Detection a{0, 0.8, {5, 5, 2, 2}}, b{1, 0.9, {5, 5, 2, 2}};
  EXPECT_EQ(nms({a, b}, 0.45).size(), 2u);
}

TEST(NmsTest, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 300; ++i) {
    auto d = random_dets(rng, 20, 3);
    EXPECT_TRUE(testing::same_detections(nms(d, 0.45), oracle::nms(d, 0.45))) << "instance " << i;
  }
}

TEST(NmsTest, Properties) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    auto d = random_dets(rng, 20, 3);
    auto kept = nms(d, 0.45);
    EXPECT_LE(kept.size(), d.size());
    for (std::size_t a = 0; a < kept.size(); ++a) {
      for (std::size_t b = a + 1; b < kept.size(); ++b) {
        if (kept[a].class_id == kept[b].class_id) EXPECT_LT(iou(kept[a].box, kept[b].box), 0.45);
      }
      EXPECT_TRUE(std::any_of(d.begin(), d.end(), [&](const Detection& x) {
        return x.confidence == kept[a].confidence && x.box.cx == kept[a].box.cx;
      }));
    }
    EXPECT_TRUE(std::is_sorted(kept.begin(), kept.end(), detection_rank_less));
    EXPECT_GE(nms(d, 0.6).size(), kept.size());
  }
}

TEST(WireFormatTest, RoundTrip) {
  Detection d{3, 0.123456789, {10.5, 20.25, 4.0, 32.0}};
  const auto line = format_detection("img_001", d);
  EXPECT_EQ(line, "img_001 scratch 0.123457 10.500 20.250 4.000 32.000");
  DetectionRecord rec;
  ASSERT_TRUE(parse_detection(line, rec));
  EXPECT_EQ(rec.image_id, "img_001");
  EXPECT_EQ(rec.det.class_id, 3);
  EXPECT_DOUBLE_EQ(rec.det.box.h, 32.0);
  EXPECT_FALSE(parse_detection("img unknown_class 0.5 1 1 1 1", rec));
  EXPECT_FALSE(parse_detection("img scratch", rec));
}

}  // namespace
}  // namespace gbh
