// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <functional>
#include <memory>
#include <random>

#include "../support/block_gradcheck.hpp"
#include "gbh/core/gradcheck.hpp"
#include "gbh/nn/blocks.hpp"

namespace gbh::nn {
namespace {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
void fill(Tensor<T> t, T v) {
  for (auto& x : t.data()) x = v;
}

template <typename T>
void zero_all(Module<T>& m) {
  for (auto& p : m.parameters()) fill(p, T(0));
}

TEST(FocusBlockTest, StemShapesAt960) {
  std::mt19937_64 rng(1);
  Focus<float> focus(3, 32, 3, ConvPolicy{}, rng);
  auto y = focus.forward(Tensor<float>::zeros({1, 3, 960, 960}));
  EXPECT_EQ(y.shape(), (Shape{1, 32, 480, 480}));
}

TEST(ConvBnActTest, SliceToThirtyTwoChannels) {
  std::mt19937_64 rng(2);
  ConvBnAct<float> conv(12, 32, 3, 1, rng);
  auto y = conv.forward(focus_slice(Tensor<float>::zeros({1, 3, 960, 960})));
  EXPECT_EQ(y.shape(), (Shape{1, 32, 480, 480}));
}

TEST(ConvBnActTest, StrideTwoHalves) {
  std::mt19937_64 rng(3);
  ConvBnAct<double> conv(4, 6, 3, 2, rng);
  EXPECT_EQ(conv.forward(random_tensor({2, 4, 10, 14}, 4)).shape(), (Shape{2, 6, 5, 7}));
}

TEST(ConvBnActTest, ModuleCountIsConvBnActivation) {
  std::mt19937_64 rng(3);
  EXPECT_EQ(ConvBnAct<float>(4, 6, 3, 1, rng).module_count(), 3u);
}

TEST(GhostConvTest, ParameterCountsByFormulaAndByWalkingWeights) {
  std::mt19937_64 rng(5);
  GhostConvSpec spec{4, 8, 2, 1, 3, 1};
  GhostConv<float> g1(spec, rng);
  EXPECT_EQ(spec.intrinsic_channels(), 4u);
  EXPECT_EQ(g1.conv_weight_count(), 4u * 1 * 1 * 4 + 4u * 3 * 3);
  EXPECT_EQ(g1.conv_weight_count(), 52u);
  EXPECT_EQ(Conv2d<float>(4, 8, 1, 1, 0, false, rng).weight().numel(), 32u);
  EXPECT_EQ(Conv2d<float>(4, 8, 3, 1, 1, false, rng).weight().numel(), 288u);

  spec.primary_kernel = 3;
  GhostConv<float> g3(spec, rng);
  EXPECT_EQ(g3.conv_weight_count(), 4u * 4 * 9 + 36u);
  EXPECT_EQ(g3.conv_weight_count(), 180u);

  // Walking the tensors: BN adds gamma and beta for the m intrinsic maps.
  std::size_t walked = 0;
  for (const auto& t : g3.parameters()) walked += t.numel();
  EXPECT_EQ(walked, 180u + 2 * 4);
}

TEST(GhostConvTest, FlopRatioApproachesOneOverS) {
  std::mt19937_64 rng(6);
  GhostConvSpec spec{64, 128, 2, 3, 3, 1};
  GhostConv<float> ghost(spec, rng);
  Conv2d<float> plain(64, 128, 3, 1, 1, false, rng);
  const Shape in{1, 64, 20, 20};
  const double ratio = static_cast<double>(ghost.flops(in).flops) / static_cast<double>(plain.flops(in).flops);
  EXPECT_GE(ratio, 0.5);
  EXPECT_LE(ratio, 0.52);
  // closed form 1/s + (s-1)/(s*c) with k = d
  EXPECT_NEAR(ratio, 0.5 + 1.0 / (2 * 64), 1e-12);
}

TEST(GhostConvTest, ZeroCheapWeightsLeaveIntrinsicMapsAndZeros) {
  std::mt19937_64 rng(7);
  GhostConvSpec spec{3, 6, 2, 1, 3, 1};
  GhostConv<double> g(spec, rng);
  fill(g.cheap().weight(), 0.0);
  auto x = random_tensor({1, 3, 5, 5}, 8);
  auto y = g.forward(x);
  auto plain = g.primary().forward(x);
  ASSERT_EQ(y.shape(), (Shape{1, 6, 5, 5}));
  for (std::size_t i = 0; i < plain.numel(); ++i) EXPECT_EQ(y[i], plain[i]);
  for (std::size_t i = plain.numel(); i < y.numel(); ++i) EXPECT_EQ(y[i], 0.0);
}

TEST(GhostConvTest, IntrinsicMapsPassThroughUnchanged) {
  std::mt19937_64 rng(9);
  GhostConvSpec spec{3, 9, 3, 1, 3, 1};  // m = 3, cheap = 6
  GhostConv<double> g(spec, rng);
  auto x = random_tensor({2, 3, 4, 4}, 10);
  auto y = g.forward(x);
  auto intrinsic = g.primary().forward(x);
  EXPECT_EQ(slice_channels(y, 0, 3).values(), intrinsic.values());
}

TEST(GhostConvTest, SurplusChannelsTruncated) {
  std::mt19937_64 rng(11);
  GhostConvSpec spec{4, 7, 2, 1, 3, 1};  // m = 4, 4 + 4 = 8 -> 7
  GhostConv<double> g(spec, rng);
  EXPECT_EQ(spec.intrinsic_channels(), 4u);
  EXPECT_EQ(g.forward(random_tensor({1, 4, 3, 3}, 12)).dim(1), 7u);
}

TEST(GhostConvTest, InvalidSpecsRejected) {
  std::mt19937_64 rng(13);
  EXPECT_THROW(GhostConv<float>(GhostConvSpec{4, 8, 1, 1, 3, 1}, rng), SpecError);
  EXPECT_THROW(GhostConv<float>(GhostConvSpec{4, 1, 2, 1, 3, 1}, rng), SpecError);
}

TEST(GhostConvTest, IntrinsicArithmeticInvariants) {
  for (std::size_t n = 2; n <= 64; ++n) {
    for (std::size_t s = 2; s <= std::min<std::size_t>(n, 6); ++s) {
      GhostConvSpec spec{8, n, s, 1, 3, 1};
      const std::size_t m = spec.intrinsic_channels();
      EXPECT_GE(m, 1u);
      EXPECT_LE(m, n);
      EXPECT_GE(m + m * (s - 1), n);
    }
  }
}

// m*c*k^2 + m*(s-1)*k^2 < n*c*k^2 holds for c >= 2 when s divides n. With a
// single input channel or a rounded-up m the ghost form can tie or lose.
TEST(GhostConvTest, FewerParametersThanPlainWhenKernelsMatch) {
  std::mt19937_64 rng(14);
  for (std::size_t c : {2, 3, 8, 16}) {
    for (std::size_t n : {2, 4, 6, 8, 12, 32}) {
      for (std::size_t s : {2, 3}) {
        if (n < s || n % s != 0) continue;
        for (std::size_t k : {1, 3}) {
          GhostConv<float> g(GhostConvSpec{c, n, s, k, k, 1}, rng);
          Conv2d<float> plain(c, n, k, 1, k / 2, false, rng);
          EXPECT_LT(g.conv_weight_count(), plain.weight().numel())
              << "c=" << c << " n=" << n << " s=" << s << " k=" << k;
        }
      }
    }
  }
}

TEST(GhostConvTest, SavingsVanishAtTheEdges) {
  std::mt19937_64 rng(14);
  // c = 1: m*s >= n weights either way
  EXPECT_EQ(GhostConv<float>(GhostConvSpec{1, 8, 2, 3, 3, 1}, rng).conv_weight_count(), 72u);
  // c = 2, n = 3: m = 2 rounds up, 2*2*1 + 2*1 = 6 = 2*3
  EXPECT_EQ(GhostConv<float>(GhostConvSpec{2, 3, 2, 1, 1, 1}, rng).conv_weight_count(), 6u);
}

TEST(GhostConvTest, ModuleCount) {
  std::mt19937_64 rng(15);
  GhostConv<float> g(GhostConvSpec{4, 8, 2, 1, 3, 1}, rng);
  EXPECT_EQ(g.module_count(), 5u);  // conv, bn, act, depthwise, concat
}

TEST(BottleneckTest, ZeroedResidualWithShortcutIsIdentity) {
  std::mt19937_64 rng(16);
  Bottleneck<double> b(4, 4, true, ConvPolicy{}, rng);
  zero_all(b);
  b.set_training(false);
  auto x = random_tensor({1, 4, 5, 5}, 17);
  EXPECT_EQ(b.forward(x).values(), x.values());
}

TEST(BottleneckTest, WithoutShortcutOutputIsResidualPathOnly) {
  std::mt19937_64 rng(18);
  Bottleneck<double> b(4, 6, false, ConvPolicy{}, rng);
  auto x = random_tensor({1, 4, 5, 5}, 19);
  auto expected = b.cv2().forward(b.cv1().forward(x));
  EXPECT_EQ(b.forward(x).values(), expected.values());
}

TEST(BottleneckTest, ShortcutChannelMismatchIsSpecError) {
  std::mt19937_64 rng(20);
  EXPECT_THROW(Bottleneck<float>(4, 6, true, ConvPolicy{}, rng), SpecError);
}

TEST(BottleneckCSPTest, ShapeContract) {
  std::mt19937_64 rng(21);
  BottleneckCSP<double> csp(CspSpec{8, 12, 0.5, 1, true}, ConvPolicy{}, rng);
  EXPECT_EQ(csp.forward(random_tensor({2, 8, 6, 6}, 22)).shape(), (Shape{2, 12, 6, 6}));
}

TEST(BottleneckCSPTest, ShapeIndependentOfWeights) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    std::mt19937_64 rng(seed);
    BottleneckCSP<double> csp(CspSpec{6, 10, 0.5, 2, false}, ConvPolicy{}, rng);
    if (seed % 2) zero_all(csp);
    EXPECT_EQ(csp.forward(random_tensor({1, 6, 4, 4}, seed)).shape(), (Shape{1, 10, 4, 4}));
  }
}

TEST(BottleneckCSPTest, ZeroedTransitionIsolatesBypassPath) {
  std::mt19937_64 rng(23);
  BottleneckCSP<double> csp(CspSpec{8, 8, 0.5, 2, true}, ConvPolicy{}, rng);
  csp.set_training(false);
  fill(csp.transition().weight(), 0.0);
  auto x = random_tensor({1, 8, 6, 6}, 24);
  auto before = csp.forward(x);
  // Perturb every weight that lives only on the bottleneck path.
  std::vector<NamedTensor<double>> named;
  csp.collect_parameters("", named);
  std::mt19937_64 prng(25);
  std::normal_distribution<double> noise(0, 1);
  std::size_t touched = 0;
  for (auto& nt : named) {
    if (nt.name.rfind("cv1.", 0) == 0 || nt.name.rfind("m.", 0) == 0) {
      for (auto& v : nt.tensor.data()) v += noise(prng);
      ++touched;
    }
  }
  ASSERT_GT(touched, 0u);
  EXPECT_EQ(csp.forward(x).values(), before.values());
  // ... while the bypass path still matters.
  for (auto& v : csp.bypass().weight().data()) v += 1.0;
  EXPECT_NE(csp.forward(x).values(), before.values());
}

TEST(BottleneckCSPTest, ModuleCount) {
  std::mt19937_64 rng(26);
  BottleneckCSP<float> csp(CspSpec{8, 8, 0.5, 1, true}, ConvPolicy{}, rng);
  // cv1 3 + cv2 1 + cv3 1 + cv4 3 + bn 1 + concat/act 2 + bottleneck (3 + 3)
  EXPECT_EQ(csp.module_count(), 3u + 1 + 1 + 3 + 1 + 2 + 6);
}

TEST(C3Test, ShapeContract) {
  std::mt19937_64 rng(27);
  C3<double> c3(CspSpec{8, 12, 0.5, 1, true}, ConvPolicy{}, rng);
  EXPECT_EQ(c3.forward(random_tensor({2, 8, 6, 6}, 28)).shape(), (Shape{2, 12, 6, 6}));
}

TEST(C3Test, NullEntryIsolatesBypassPath) {
  std::mt19937_64 rng(29);
  C3<double> c3(CspSpec{8, 8, 0.5, 2, true}, ConvPolicy{}, rng);
  c3.set_training(false);
  // cv1 of zero weights gives silu(0) = 0; bottlenecks on zero stay zero
  for (auto& p : c3.entry().parameters()) fill(p, 0.0);
  auto x = random_tensor({1, 8, 6, 6}, 30);
  auto before = c3.forward(x);
  std::vector<NamedTensor<double>> named;
  c3.collect_parameters("", named);
  for (auto& nt : named) {
    if (nt.name.rfind("m.", 0) == 0 && nt.name.find("conv.weight") != std::string::npos) {
      for (auto& v : nt.tensor.data()) v *= 3.0;
    }
  }
  EXPECT_EQ(c3.forward(x).values(), before.values());
}

TEST(SPPTest, ConstantInputGivesConstantOutput) {
  std::mt19937_64 rng(31);
  SPP<double> spp(4, 6, ConvPolicy{}, rng);
  auto y = spp.forward(Tensor<double>(Shape{1, 4, 9, 7}, -0.7));
  ASSERT_EQ(y.shape(), (Shape{1, 6, 9, 7}));
  for (std::size_t c = 0; c < 6; ++c)
    for (std::size_t i = 0; i < 63; ++i) EXPECT_NEAR(y[c * 63 + i], y[c * 63], 1e-12);
}

TEST(SPPTest, SpatialExtentsPreserved) {
  std::mt19937_64 rng(32);
  SPP<float> spp(8, 8, ConvPolicy{}, rng);
  for (std::size_t s : {1, 2, 5, 30}) {
    EXPECT_EQ(spp.forward(Tensor<float>::zeros({1, 8, s, s + 1})).shape(), (Shape{1, 8, s, s + 1}));
  }
}

TEST(SPPTest, EmptyInputIsDimensionError) {
  std::mt19937_64 rng(33);
  SPP<float> spp(8, 8, ConvPolicy{}, rng);
  EXPECT_THROW(spp.forward(Tensor<float>::zeros({1, 8, 0, 4})), DimensionError);
}

TEST(BlockGradTest, EveryBlockFiveSeedsSinglePrecision) {
  for (const auto& c : testing::block_cases<float, double>()) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      EXPECT_LT(testing::block_grad_error(c.make, c.in, seed), 1e-3) << c.name << " seed " << seed;
    }
  }
}

TEST(BlockGradTest, EveryBlockFiveSeedsDoublePrecision) {
  for (const auto& c : testing::block_cases<double, long double>()) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      EXPECT_LT(testing::block_grad_error(c.make, c.in, seed), 1e-6) << c.name << " seed " << seed;
    }
  }
}

}  // namespace
}  // namespace gbh::nn
