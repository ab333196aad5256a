// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "gbh/core/gradcheck.hpp"
#include "gbh/core/ops.hpp"

namespace gbh {
namespace {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

// Six nested loops, written out independently of the library kernels.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b,
                          std::size_t stride, std::size_t pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t N = w.dim(0), K = w.dim(2);
  const std::size_t OH = (H + 2 * pad - K) / stride + 1, OW = (W + 2 * pad - K) / stride + 1;
  Tensor<double> y(Shape{B, N, OH, OW});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < N; ++o)
      for (std::size_t i = 0; i < OH; ++i)
        for (std::size_t j = 0; j < OW; ++j) {
          double acc = b ? (*b)[o] : 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < K; ++ki)
              for (std::size_t kj = 0; kj < K; ++kj) {
                const long r = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                const long q = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
                acc += x.at(n, c, static_cast<std::size_t>(r), static_cast<std::size_t>(q)) *
                       w.at(o, c, ki, kj);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

TEST(Conv2dTest, IdentityOneByOne) {
  Tensor<double> x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor<double> w(Shape{1, 1, 1, 1}, {1});
  for (auto algo : {ConvAlgorithm::kDirect, ConvAlgorithm::kGemm}) {
    auto y = conv2d(x, w, Tensor<double>(), 1, 0, algo);
    EXPECT_EQ(y.shape(), x.shape());
    EXPECT_EQ(y.values(), x.values());
  }
}

TEST(Conv2dTest, SummationCase) {
  auto y = conv2d(Tensor<double>::ones({1, 1, 3, 3}), Tensor<double>::ones({1, 1, 3, 3}), 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 9.0);
}

TEST(Conv2dTest, StridedPaddedMatchesNaiveOracle) {
  auto x = random_tensor({1, 1, 4, 4}, 11);
  auto w = random_tensor({2, 1, 3, 3}, 12);
  auto y = conv2d(x, w, 2, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 2, 2}));
  auto ref = naive_conv(x, w, nullptr, 2, 1);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Conv2dTest, DirectIsBitExactWithOracleAndGemmWithinTolerance) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> ext(3, 16), ch(1, 8), bt(1, 2);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, 2)(rng) * 2 + 1;
    const std::size_t h = std::max(ext(rng), k), w_ = std::max(ext(rng), k);
    const std::size_t stride = std::uniform_int_distribution<std::size_t>(1, 2)(rng);
    const std::size_t pad = std::uniform_int_distribution<std::size_t>(0, k / 2)(rng);
    auto x = random_tensor({bt(rng), ch(rng), h, w_}, 100 + trial);
    auto w = random_tensor({ch(rng), x.dim(1), k, k}, 200 + trial);
    auto b = random_tensor({w.dim(0)}, 300 + trial);
    auto ref = naive_conv(x, w, &b, stride, pad);
    auto direct = conv2d(x, w, b, stride, pad, ConvAlgorithm::kDirect);
    auto gemm = conv2d(x, w, b, stride, pad, ConvAlgorithm::kGemm);
    ASSERT_EQ(direct.shape(), ref.shape());
    for (std::size_t i = 0; i < ref.numel(); ++i) {
      EXPECT_EQ(direct[i], ref[i]) << "trial " << trial;
      EXPECT_LE(std::abs(gemm[i] - ref[i]), 1e-5 * std::max(1.0, std::abs(ref[i])));
    }
  }
}

TEST(Conv2dTest, FloatGemmWithinRelativeToleranceOfDirect) {
  auto x = random_tensor<float>({2, 8, 16, 16}, 14);
  auto w = random_tensor<float>({8, 8, 3, 3}, 15);
  auto a = conv2d(x, w, 1, 1, ConvAlgorithm::kDirect);
  auto b = conv2d(x, w, 1, 1, ConvAlgorithm::kGemm);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    EXPECT_LE(std::abs(a[i] - b[i]), 1e-5f * std::max(1.0f, std::abs(a[i])));
  }
}

TEST(Conv2dTest, ChannelMismatchNamesAxis) {
  try {
    conv2d(random_tensor({1, 3, 4, 4}, 1), random_tensor({2, 2, 3, 3}, 2), 1, 1);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.axis(), "channels");
  }
}

TEST(Conv2dTest, KernelLargerThanPaddedInputIsDimensionError) {
  EXPECT_THROW(conv2d(random_tensor({1, 1, 2, 2}, 1), random_tensor({1, 1, 5, 5}, 2), 1, 1),
               DimensionError);
}

TEST(DepthwiseTest, IdentityKernelsReproduceInput) {
  auto x = random_tensor({1, 2, 5, 5}, 20);
  Tensor<double> w(Shape{2, 1, 3, 3}, 0.0);
  w.at(0, 0, 1, 1) = 1;
  w.at(1, 0, 1, 1) = 1;
  EXPECT_EQ(depthwise_conv2d(x, w, 1, 1).values(), x.values());
}

TEST(DepthwiseTest, ChannelIsolation) {
  auto x = random_tensor({1, 2, 5, 5}, 21);
  Tensor<double> w(Shape{2, 1, 3, 3}, 0.0);
  w.at(1, 0, 1, 1) = 1;
  auto y = depthwise_conv2d(x, w, 1, 1);
  for (std::size_t i = 0; i < 25; ++i) {
    EXPECT_EQ(y[i], 0.0);
    EXPECT_EQ(y[25 + i], x[25 + i]);
  }
}

TEST(DepthwiseTest, MatchesPerChannelLoopOracle) {
  auto x = random_tensor({1, 3, 5, 5}, 22);
  auto w = random_tensor({3, 1, 3, 3}, 23);
  auto y = depthwise_conv2d(x, w, 1, 1);
  for (std::size_t c = 0; c < 3; ++c) {
    auto xc = slice_channels(x, c, c + 1);
    Tensor<double> wc(Shape{1, 1, 3, 3});
    for (std::size_t k = 0; k < 9; ++k) wc[k] = w[c * 9 + k];
    auto ref = naive_conv(xc, wc, nullptr, 1, 1);
    for (std::size_t i = 0; i < 25; ++i) EXPECT_NEAR(y[c * 25 + i], ref[i], 1e-12);
  }
}

TEST(DepthwiseTest, WrongFilterCountIsDimensionError) {
  EXPECT_THROW(depthwise_conv2d(random_tensor({1, 3, 5, 5}, 1), random_tensor({2, 1, 3, 3}, 2), 1, 1),
               DimensionError);
}

TEST(BatchNormTest, InferenceWithUnitStatsIsIdentity) {
  auto x = random_tensor({2, 3, 4, 4}, 30);
  auto rm = Tensor<double>::zeros({3});
  auto rv = Tensor<double>::ones({3});
  BatchNormOptions opt;
  opt.training = false;
  opt.eps = 0;
  auto y = batch_norm(x, Tensor<double>::ones({3}), Tensor<double>::zeros({3}), rm, rv, opt);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y[i], x[i], 1e-12);
}

TEST(BatchNormTest, ConstantChannelNormalizesToZero) {
  Tensor<double> x(Shape{2, 1, 3, 3}, 7.5);
  auto rm = Tensor<double>::zeros({1});
  auto rv = Tensor<double>::ones({1});
  BatchNormOptions opt;
  opt.training = true;
  auto y = batch_norm(x, Tensor<double>::ones({1}), Tensor<double>::zeros({1}), rm, rv, opt);
  for (double v : y.data()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(v, 0.0, 1e-9);
  }
}

TEST(BatchNormTest, OutputStatisticsMatchGammaBeta) {
  auto x = random_tensor({4, 3, 6, 6}, 31, -5, 5);
  Tensor<double> gamma(Shape{3}, {0.5, 2.0, 1.5});
  Tensor<double> beta(Shape{3}, {-1.0, 0.25, 3.0});
  auto rm = Tensor<double>::zeros({3});
  auto rv = Tensor<double>::ones({3});
  BatchNormOptions opt;
  opt.training = true;
  auto y = batch_norm(x, gamma, beta, rm, rv, opt);
  const std::size_t plane = 36, count = 4 * plane;
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, s2 = 0, xs = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t p = 0; p < plane; ++p) {
        s += y[(n * 3 + c) * plane + p];
        xs += x[(n * 3 + c) * plane + p];
      }
    const double mean = s / count, xmean = xs / count;
    double xvar = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t p = 0; p < plane; ++p) {
        const double d = y[(n * 3 + c) * plane + p] - mean;
        s2 += d * d;
        const double dx = x[(n * 3 + c) * plane + p] - xmean;
        xvar += dx * dx;
      }
    const double var = s2 / count;
    EXPECT_NEAR(mean, beta[c], 1e-5);
    // eps shrinks the variance by var/(var+eps)
    const double expected = gamma[c] * gamma[c] * (xvar / count) / (xvar / count + 1e-5);
    EXPECT_NEAR(var, expected, 1e-5);
    EXPECT_NEAR(var, gamma[c] * gamma[c], 1e-5 * gamma[c] * gamma[c] * 10);
    // running stats moved by momentum 0.03 toward the batch statistics
    EXPECT_NEAR(rm[c], 0.03 * xmean, 1e-12);
    EXPECT_NEAR(rv[c], 0.97 + 0.03 * xvar / (count - 1), 1e-12);
  }
}

TEST(ElementwiseTest, SigmoidOfZeroIsHalf) {
  EXPECT_EQ(sigmoid(Tensor<double>::zeros({1}))[0], 0.5);
}

TEST(ElementwiseTest, AddShapeMismatchIsDimensionError) {
  EXPECT_THROW(add(Tensor<double>::zeros({1, 2}), Tensor<double>::zeros({2, 1})), DimensionError);
}

TEST(ConcatTest, ChannelOrderPreserved) {
  Tensor<double> a(Shape{1, 2, 2, 2}, 1.0), b(Shape{1, 3, 2, 2}, 2.0);
  auto y = concat_channels<double>({a, b});
  ASSERT_EQ(y.shape(), (Shape{1, 5, 2, 2}));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(y[i], 1.0);
  for (std::size_t i = 8; i < 20; ++i) EXPECT_EQ(y[i], 2.0);
}

TEST(ConcatTest, MismatchedHeightIsDimensionError) {
  Tensor<double> a(Shape{1, 2, 2, 2}), b(Shape{1, 2, 3, 2});
  try {
    concat_channels<double>({a, b});
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.axis(), "height");
  }
}

TEST(ConcatTest, SliceRecoversEachPart) {
  auto a = random_tensor({2, 3, 4, 5}, 40), b = random_tensor({2, 1, 4, 5}, 41),
       c = random_tensor({2, 4, 4, 5}, 42);
  auto y = concat_channels<double>({a, b, c});
  EXPECT_EQ(slice_channels(y, 0, 3).values(), a.values());
  EXPECT_EQ(slice_channels(y, 3, 4).values(), b.values());
  EXPECT_EQ(slice_channels(y, 4, 8).values(), c.values());
}

TEST(MaxPoolTest, TwoByTwo) {
  Tensor<double> x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  auto y = maxpool2d(x, 2, 2, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 4.0);
}

TEST(MaxPoolTest, SamePaddingPreservesExtent) {
  auto y = maxpool2d(random_tensor({1, 2, 7, 9}, 43), 5, 1, 2);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 7, 9}));
}

TEST(UpsampleTest, DoublesExtents) {
  Tensor<double> x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  auto y = upsample_nearest2x(x);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_EQ(y.values(), (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
}

TEST(FocusTest, SmallestCaseOrder) {
  // [[a, b], [c, d]] -> a, c, b, d
  Tensor<double> x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  auto y = focus_slice(x);
  ASSERT_EQ(y.shape(), (Shape{1, 4, 1, 1}));
  EXPECT_EQ(y.values(), (std::vector<double>{1, 3, 2, 4}));
}

TEST(FocusTest, InputShapeAt960) {
  auto y = focus_slice(Tensor<float>::zeros({1, 3, 960, 960}));
  EXPECT_EQ(y.shape(), (Shape{1, 12, 480, 480}));
}

TEST(FocusTest, DesliceInvertsSlice) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = random_tensor({2, 3, 8, 6}, 50 + seed);
    EXPECT_EQ(focus_deslice(focus_slice(x)).values(), x.values());
  }
}

TEST(FocusTest, OddExtentIsDimensionError) {
  EXPECT_THROW(focus_slice(Tensor<double>::zeros({1, 1, 3, 4})), DimensionError);
}

// Gradient checks for every differentiable op, in double precision and in
// single precision against a double-precision numeric reference.
struct OpCase {
  const char* name;
  Shape shape;
  std::function<Tensor<double>(const Tensor<double>&)> fd;
  std::function<Tensor<float>(const Tensor<float>&)> ff;
};

// Magnitudes in [0.5, 1] so no probed gradient is near zero, where the
// relative error metric is dominated by round-off.
template <typename T>
Tensor<T> weights_for(std::size_t seed, Shape shape) {
  auto t = random_tensor(std::move(shape), 9000 + seed);
  for (auto& v : t.data()) v = (v < 0 ? -0.5 : 0.5) + v / 2;
  return cast<T>(t);
}

std::vector<OpCase> op_cases(std::size_t seed) {
  auto wsum = [seed](const auto& y) {
    using T = typename std::decay_t<decltype(y)>::value_type;
    return sum(mul(y, weights_for<T>(seed, y.shape())));
  };
  return {
      {"conv2d", {2, 3, 6, 6},
       [=](const Tensor<double>& x) { return wsum(conv2d(x, weights_for<double>(seed, {4, 3, 3, 3}), weights_for<double>(seed + 1, {4}), 2, 1)); },
       [=](const Tensor<float>& x) { return wsum(conv2d(x, weights_for<float>(seed, {4, 3, 3, 3}), weights_for<float>(seed + 1, {4}), 2, 1)); }},
      {"depthwise", {1, 3, 5, 5},
       [=](const Tensor<double>& x) { return wsum(depthwise_conv2d(x, weights_for<double>(seed, {6, 1, 3, 3}), 1, 1)); },
       [=](const Tensor<float>& x) { return wsum(depthwise_conv2d(x, weights_for<float>(seed, {6, 1, 3, 3}), 1, 1)); }},
      {"batch_norm", {3, 2, 3, 3},
       [=](const Tensor<double>& x) {
         auto rm = Tensor<double>::zeros({2});
         auto rv = Tensor<double>::ones({2});
         return wsum(batch_norm(x, weights_for<double>(seed, {2}), weights_for<double>(seed + 1, {2}), rm, rv, {true}));
       },
       [=](const Tensor<float>& x) {
         auto rm = Tensor<float>::zeros({2});
         auto rv = Tensor<float>::ones({2});
         return wsum(batch_norm(x, weights_for<float>(seed, {2}), weights_for<float>(seed + 1, {2}), rm, rv, {true}));
       }},
      {"silu", {2, 7},
       [=](const Tensor<double>& x) { return wsum(silu(x)); },
       [=](const Tensor<float>& x) { return wsum(silu(x)); }},
      {"sigmoid", {2, 7},
       [=](const Tensor<double>& x) { return wsum(sigmoid(x)); },
       [=](const Tensor<float>& x) { return wsum(sigmoid(x)); }},
      {"concat_slice", {1, 4, 3, 3},
       [=](const Tensor<double>& x) { return wsum(concat_channels<double>({slice_channels(x, 1, 3), x})); },
       [=](const Tensor<float>& x) { return wsum(concat_channels<float>({slice_channels(x, 1, 3), x})); }},
      {"upsample", {1, 2, 3, 3},
       [=](const Tensor<double>& x) { return wsum(upsample_nearest2x(x)); },
       [=](const Tensor<float>& x) { return wsum(upsample_nearest2x(x)); }},
      {"focus", {1, 2, 4, 4},
       [=](const Tensor<double>& x) { return wsum(focus_slice(x)); },
       [=](const Tensor<float>& x) { return wsum(focus_slice(x)); }},
  };
}

TEST(OpGradTest, DoublePrecisionTenSeeds) {
  for (std::size_t seed = 0; seed < 10; ++seed) {
    for (const auto& c : op_cases(seed)) {
      auto x = random_tensor(c.shape, seed);
      const double err = finite_diff_check<double>(c.fd, x, 1e-5);
      EXPECT_LT(err, 1e-6) << c.name << " seed " << seed;
    }
  }
}

TEST(OpGradTest, SinglePrecisionTenSeeds) {
  for (std::size_t seed = 0; seed < 10; ++seed) {
    for (const auto& c : op_cases(seed)) {
      auto xd = random_tensor(c.shape, seed);
      auto xs = cast<float>(xd);
      const double err = finite_diff_check_mixed([&] { return c.ff(xs); }, {xs},
                                                 [&] { return c.fd(xd); }, {xd});
      EXPECT_LT(err, 1e-3) << c.name << " seed " << seed;
    }
  }
}

TEST(OpGradTest, MaxPoolAwayFromTies) {
  for (std::size_t seed = 0; seed < 10; ++seed) {
    // distinct values spaced well beyond eps so no perturbation flips an argmax
    Tensor<double> x(Shape{1, 2, 6, 6});
    std::vector<double> v(x.numel());
    std::iota(v.begin(), v.end(), 0.0);
    std::shuffle(v.begin(), v.end(), std::mt19937_64(seed));
    for (std::size_t i = 0; i < v.size(); ++i) x[i] = v[i] * 0.1;
    auto f = [seed](const Tensor<double>& t) {
      auto y = maxpool2d(t, 3, 1, 1);
      return sum(mul(y, weights_for<double>(seed, y.shape())));
    };
    EXPECT_LT(finite_diff_check<double>(f, x, 1e-4), 1e-6);
  }
}

TEST(OpGradTest, WeightGradientsOfConv) {
  auto x = random_tensor({2, 3, 5, 5}, 60);
  auto w = random_tensor({2, 3, 3, 3}, 61);
  auto b = random_tensor({2}, 62);
  auto r = random_tensor({2, 2, 5, 5}, 63);
  const double err = finite_diff_check<double>(
      [&] { return sum(mul(conv2d(x, w, b, 1, 1, ConvAlgorithm::kGemm), r)); }, {x, w, b});
  EXPECT_LT(err, 1e-6);
  const double err_direct = finite_diff_check<double>(
      [&] { return sum(mul(conv2d(x, w, b, 1, 1, ConvAlgorithm::kDirect), r)); }, {x, w, b});
  EXPECT_LT(err_direct, 1e-6);
}

}  // namespace
}  // namespace gbh
