// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "gbh/model/model.hpp"

namespace gbh::model {
namespace {

Tensor<float> random_input(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(0, 1);
  Tensor<float> t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

std::size_t ghost_count(nn::Module<float>& m);

TEST(VariantTest, HeadStridesPerVariant) {
  EXPECT_EQ(ModelVariant::standard("yolov5s").head_strides, (std::vector<std::size_t>{8, 16, 32}));
  EXPECT_EQ(ModelVariant::standard("yolov5-1").head_strides, (std::vector<std::size_t>{8, 16, 32}));
  EXPECT_EQ(ModelVariant::standard("yolov5-2").head_strides, (std::vector<std::size_t>{4, 8, 16, 32}));
  EXPECT_EQ(ModelVariant::standard("gbh").head_strides, (std::vector<std::size_t>{4, 8, 16, 32}));
}

TEST(VariantTest, BlockFamilies) {
  EXPECT_FALSE(ModelVariant::standard("yolov5s").uses_csp());
  EXPECT_TRUE(ModelVariant::standard("yolov5-1").uses_csp());
  EXPECT_TRUE(ModelVariant::standard("yolov5-2").uses_csp());
  EXPECT_TRUE(ModelVariant::standard("gbh").uses_csp());
  EXPECT_TRUE(ModelVariant::standard("gbh").uses_ghost());
  EXPECT_FALSE(ModelVariant::standard("yolov5-2").uses_ghost());
}

TEST(VariantTest, InvalidVariantsRejected) {
  EXPECT_THROW(ModelVariant::standard("yolov9"), SpecError);
  ModelVariant v = ModelVariant::standard("gbh");
  v.width_multiple = 0;
  EXPECT_THROW(v.validate(), SpecError);
  v = ModelVariant::standard("gbh");
  v.head_strides = {8, 16, 32};
  EXPECT_THROW(v.validate(), SpecError);
  EXPECT_THROW(ModelVariant::standard("gbh", 100), SpecError);
}

TEST(ModelTest, GridSizesAt960) {
  Model<float> gbh(ModelVariant::tiny("gbh", 960));
  EXPECT_EQ(gbh.grid_sizes(960), (std::vector<std::size_t>{240, 120, 60, 30}));
  Model<float> s(ModelVariant::tiny("yolov5s", 960));
  EXPECT_EQ(s.grid_sizes(960), (std::vector<std::size_t>{120, 60, 30}));
}

TEST(ModelTest, ForwardShapeContractEveryVariant) {
  for (auto name : kVariantNames) {
    Model<float> m(ModelVariant::standard(name, 128), 1);
    auto heads = m.forward(random_input({2, 3, 128, 128}, 2));
    const auto& strides = m.variant().head_strides;
    ASSERT_EQ(heads.size(), strides.size()) << name;
    for (std::size_t h = 0; h < heads.size(); ++h) {
      EXPECT_EQ(heads[h].shape(), (Shape{2, 3 * (5 + 5), 128 / strides[h], 128 / strides[h]})) << name;
    }
  }
}

TEST(ModelTest, GhostSwapNeverChangesShapes) {
  Model<float> plain(ModelVariant::tiny("yolov5-2", 64), 3);
  Model<float> ghost(ModelVariant::tiny("gbh", 64), 3);
  auto x = random_input({1, 3, 64, 64}, 4);
  auto a = plain.forward(x);
  auto b = ghost.forward(x);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].shape(), b[i].shape());
}

TEST(ModelTest, InputValidation) {
  Model<float> m(ModelVariant::tiny("gbh", 64));
  EXPECT_THROW(m.forward(Tensor<float>::zeros({1, 1, 64, 64})), DimensionError);
  EXPECT_THROW(m.forward(Tensor<float>::zeros({1, 3, 48, 64})), DimensionError);
}

TEST(ModelTest, InferenceForwardIsDeterministic) {
  for (auto name : kVariantNames) {
    Model<float> m(ModelVariant::tiny(name, 64), 5);
    auto x = random_input({1, 3, 64, 64}, 6);
    auto a = m.forward(x);
    auto b = m.forward(x);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].values(), b[i].values()) << name;
  }
}

TEST(ModelTest, SameSeedSameWeights) {
  Model<float> a(ModelVariant::tiny("gbh", 64), 9), b(ModelVariant::tiny("gbh", 64), 9);
  auto pa = a.named_parameters(), pb = b.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].tensor.values(), pb[i].tensor.values());
}

TEST(ModelTest, ParamCountIsExactWeightWalk) {
  Model<float> m(ModelVariant::tiny("gbh", 64));
  std::size_t walked = 0;
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    if (auto* mod = m.layer_module(i)) walked += mod->parameter_count();
  }
  EXPECT_EQ(m.count_params(), walked);
}

TEST(ModelTest, ParameterOrderingsAtLineageMultiples) {
  auto params = [](const char* name) { return Model<float>(ModelVariant::standard(name)).count_params(); };
  const auto s = params("yolov5s"), v1 = params("yolov5-1"), v2 = params("yolov5-2"), g = params("gbh");
  EXPECT_LT(s, v1);
  EXPECT_LT(v1, v2);
  EXPECT_LT(g, v2);
}

TEST(ModelTest, ModuleCountOrderingBetweenBaselines) {
  auto modules = [](const char* name) { return Model<float>(ModelVariant::standard(name)).count_modules(); };
  EXPECT_GT(modules("yolov5-2"), modules("yolov5s"));
  EXPECT_LT(modules("yolov5s"), modules("gbh"));
}

// Each ConvBnAct (3 nodes) swapped for a GhostConv (conv, bn, act,
// depthwise, concat = 5 nodes) adds exactly two nodes under the counting rule.
TEST(ModelTest, GhostSwapAddsTwoNodesPerReplacement) {
  Model<float> plain(ModelVariant::standard("yolov5-2"));
  Model<float> ghost(ModelVariant::standard("gbh"));
  std::size_t replaced = 0;
  for (std::size_t i = 0; i < ghost.layers().size(); ++i) {
    if (auto* mod = ghost.layer_module(i)) replaced += ghost_count(*mod);
  }
  EXPECT_GT(replaced, 0u);
  EXPECT_EQ(ghost.count_modules(), plain.count_modules() + 2 * replaced);
}

TEST(ModelTest, SingleConvFlops) {
  std::mt19937_64 rng(0);
  nn::Conv2d<float> conv(16, 32, 3, 2, 1, false, rng);
  const auto f = conv.flops({1, 16, 40, 40});
  EXPECT_EQ(f.flops, 2ull * 9 * 16 * 32 * 20 * 20);
  EXPECT_EQ(f.out, (Shape{1, 32, 20, 20}));
}

TEST(ModelTest, GhostVariantHasFewerFlops) {
  const auto g = Model<float>(ModelVariant::standard("gbh")).count_flops(960);
  const auto p = Model<float>(ModelVariant::standard("yolov5-2")).count_flops(960);
  EXPECT_LT(g, p);
}

TEST(ModelTest, FourHeadTapsTheStrideFourBackboneStage) {
  const auto table = layer_table(ModelVariant::standard("gbh"));
  // layer 2 is the first CSP stage after Focus and the stride-2 conv
  bool tapped = false;
  for (const auto& l : table) {
    if (l.kind == BlockKind::kConcat && l.from.size() == 2 && l.from[1] == 2) tapped = true;
  }
  EXPECT_TRUE(tapped);
  EXPECT_EQ(table.back().kind, BlockKind::kDetect);
  for (std::size_t i = 0; i < table.size(); ++i) {
    for (int f : table[i].from) EXPECT_LT(f, static_cast<int>(i));
  }
}

TEST(ModelTest, CopyStateToDoubleTwinMatchesForward) {
  Model<float> f(ModelVariant::tiny("gbh", 64), 7);
  Model<double> d(ModelVariant::tiny("gbh", 64), 8);
  d.copy_state_from(f);
  auto x = random_input({1, 3, 64, 64}, 9);
  auto a = f.forward(x);
  auto b = d.forward(cast<double>(x));
  for (std::size_t h = 0; h < a.size(); ++h) {
    for (std::size_t i = 0; i < a[h].numel(); ++i) EXPECT_NEAR(a[h][i], b[h][i], 1e-4);
  }
}

TEST(ModelTest, DetectBiasPriors) {
  Model<float> m(ModelVariant::tiny("gbh", 192));
  auto b = m.detect().head(0).bias();
  // stride 4 at 192: 48 x 48 cells; bias includes the uniform init in +-1/sqrt(fan_in)
  const double fan = 1.0 / std::sqrt(static_cast<double>(m.detect().head(0).in_channels()));
  EXPECT_NEAR(b[4], std::log(8.0 / (48.0 * 48.0)), fan + 1e-6);
  EXPECT_NEAR(b[5], std::log(0.6 / (5 - 0.99)), fan + 1e-6);
}

std::size_t ghost_count(nn::Module<float>& m) {
  std::vector<nn::NamedTensor<float>> named;
  m.collect_parameters("", named);
  std::size_t n = 0;
  for (const auto& nt : named) {
    // every GhostConv owns exactly one cheap depthwise weight
    if (nt.name.size() >= 12 && nt.name.compare(nt.name.size() - 12, 12, "cheap.weight") == 0) ++n;
  }
  return n;
}

}  // namespace
}  // namespace gbh::model
