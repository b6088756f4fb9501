#include <cmath>
#include <cstring>
#include <numeric>

#include <gtest/gtest.h>

#include "conv_oracle.hpp"
#include "fogsight/checkpoint.hpp"
#include "fogsight/error.hpp"
#include "fogsight/gradcheck.hpp"
#include "fogsight/kernels.hpp"
#include "fogsight/ops.hpp"
#include "fogsight/optim.hpp"
#include "fogsight/params.hpp"

using namespace fogsight;
using namespace fogsight::ad;
using TensorD = Tensor<double>;
using TensorF = Tensor<float>;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = false) {
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>(std::move(shape), std::move(v), requires_grad);
}

// Values whose pairwise gaps exceed the finite-difference step, so max-pool
// and relu stay differentiable under perturbation.
TensorD spread_tensor(Shape shape, Rng& rng) {
  const auto n = numel(shape);
  std::vector<double> v(n);
  std::iota(v.begin(), v.end(), 0.0);
  for (std::size_t i = n; i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  for (auto& x : v) x = (x - n / 2.0) * 0.05 + 0.0137;
  return TensorD(std::move(shape), std::move(v));
}

class IsaSweep : public ::testing::TestWithParam<kernels::Isa> {
 protected:
  void SetUp() override {
    if (!kernels::isa_supported(GetParam())) GTEST_SKIP() << "ISA unavailable";
    previous_ = kernels::active_isa();
    kernels::set_isa(GetParam());
  }
  void TearDown() override { kernels::set_isa(previous_); }

 private:
  kernels::Isa previous_ = kernels::Isa::scalar;
};

}  // namespace

// ---- tensor basics --------------------------------------------------------

TEST(Tensor, RejectsInconsistentShape) {
  EXPECT_THROW(TensorD({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(TensorD({0, 2}, {}), DimensionError);
}

TEST(Backward, SumGivesOnes) {
  auto x = TensorD({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  sum(x).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareAtThreeGivesSix) {
  auto x = TensorD::scalar(3.0, true);
  sum(mul(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, RepeatedCallsAccumulateUntilZeroGrad) {
  auto x = TensorD::scalar(3.0, true);
  auto loss = sum(mul(x, x));
  loss.backward();
  loss.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
  x.zero_grad();
  loss.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, NonScalarLossIsUsageError) {
  auto x = TensorD({2}, {1, 2}, true);
  EXPECT_THROW(relu(x).backward(), UsageError);
  auto c = TensorD::scalar(1.0);
  EXPECT_THROW(c.backward(), UsageError);
}

TEST(Backward, TapeOrderFollowsForwardExecution) {
  auto x = TensorD::scalar(2.0, true);
  auto a = mul(x, x);
  auto b = scale(a, 3.0);
  auto c = add(b, a);
  ASSERT_NE(a.producer(), nullptr);
  EXPECT_LT(a.producer()->seq, b.producer()->seq);
  EXPECT_LT(b.producer()->seq, c.producer()->seq);
  sum(c).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 16.0);  // d(4x^2)/dx at 2
}

TEST(Backward, NoGradGuardRecordsNothing) {
  auto x = TensorD::scalar(2.0, true);
  NoGradGuard guard;
  auto y = mul(x, x);
  EXPECT_EQ(y.producer(), nullptr);
  EXPECT_FALSE(y.requires_grad());
}

// ---- conv2d -----------------------------------------------------------------

TEST(Conv2d, FullOverlapCenterIsNine) {
  auto x = TensorD::full({1, 1, 3, 3}, 1.0);
  auto w = TensorD::full({1, 1, 3, 3}, 1.0);
  auto y = conv2d(x, w, TensorD(), 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_EQ(y.data()[4], 9.0);
}

TEST(Conv2d, IdentityKernel) {
  Rng rng(1);
  auto x = random_tensor<double>({1, 1, 4, 5}, rng);
  auto y = conv2d(x, TensorD({1, 1, 1, 1}, {1.0}), TensorD({1}, {0.0}), 1, 0);
  EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
}

TEST(Conv2d, ChannelMismatchIsDimensionError) {
  auto x = TensorD::zeros({1, 2, 4, 4});
  auto w = TensorD::zeros({1, 3, 3, 3});
  EXPECT_THROW(conv2d(x, w, TensorD(), 1, 1), DimensionError);
  EXPECT_THROW(conv2d(TensorD::zeros({1, 1, 2, 2}), TensorD::zeros({1, 1, 5, 5}), TensorD(), 1, 0),
               DimensionError);
}

TEST_P(IsaSweep, Conv2dStridedMatchesBruteForce) {
  Rng rng(2);
  const oracle::ConvCase cc{1, 2, 5, 5, 3, 3, 3, 2, 1, 1};
  auto x = random_tensor<double>({1, 2, 5, 5}, rng);
  auto w = random_tensor<double>({3, 2, 3, 3}, rng);
  auto b = random_tensor<double>({3}, rng);
  auto y = conv2d(x, w, b, 2, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 3, 3, 3}));
  const auto expected = oracle::brute_force_conv2d<double>(
      cc, {x.data().begin(), x.data().end()}, {w.data().begin(), w.data().end()},
      {b.data().begin(), b.data().end()});
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(y.data()[i], expected[i]) << i;
}

TEST_P(IsaSweep, Conv2dEqualsBruteForceOnRandomShapes) {
  Rng rng(3);
  for (int trial = 0; trial < 60; ++trial) {
    oracle::ConvCase cc{};
    cc.n = 1 + rng.below(2);
    cc.c = 1 + rng.below(4);
    cc.h = 1 + rng.below(8);
    cc.w = 1 + rng.below(8);
    cc.f = 1 + rng.below(4);
    cc.kh = 1 + rng.below(3);
    cc.kw = 1 + rng.below(3);
    cc.stride = 1 + rng.below(2);
    cc.pad = rng.below(3);
    cc.dilation = 1 + rng.below(2);
    if (cc.h + 2 * cc.pad < cc.dilation * (cc.kh - 1) + 1 ||
        cc.w + 2 * cc.pad < cc.dilation * (cc.kw - 1) + 1) {
      --trial;
      continue;
    }
    for (bool use_float : {false, true}) {
      if (use_float) {
        auto x = random_tensor<float>({cc.n, cc.c, cc.h, cc.w}, rng);
        auto w = random_tensor<float>({cc.f, cc.c, cc.kh, cc.kw}, rng);
        auto b = random_tensor<float>({cc.f}, rng);
        auto y = conv2d(x, w, b, cc.stride, cc.pad, cc.dilation);
        const auto expected = oracle::brute_force_conv2d<float>(
            cc, {x.data().begin(), x.data().end()}, {w.data().begin(), w.data().end()},
            {b.data().begin(), b.data().end()});
        ASSERT_EQ(y.numel(), expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) ASSERT_EQ(y.data()[i], expected[i]);
      } else {
        auto x = random_tensor<double>({cc.n, cc.c, cc.h, cc.w}, rng);
        auto w = random_tensor<double>({cc.f, cc.c, cc.kh, cc.kw}, rng);
        auto b = random_tensor<double>({cc.f}, rng);
        auto y = conv2d(x, w, b, cc.stride, cc.pad, cc.dilation);
        const auto expected = oracle::brute_force_conv2d<double>(
            cc, {x.data().begin(), x.data().end()}, {w.data().begin(), w.data().end()},
            {b.data().begin(), b.data().end()});
        ASSERT_EQ(y.numel(), expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) ASSERT_EQ(y.data()[i], expected[i]);
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(BothIsas, IsaSweep,
                         ::testing::Values(kernels::Isa::scalar, kernels::Isa::avx2),
                         [](const auto& info) { return std::string(kernels::isa_name(info.param)); });

// ---- conv_transpose2d -------------------------------------------------------

TEST(ConvTranspose2d, UnitKernelStrideTwoCopiesBlocks) {
  auto x = TensorD({1, 1, 2, 2}, {1, 2, 3, 4});
  auto w = TensorD::full({1, 1, 2, 2}, 1.0);
  auto y = conv_transpose2d(x, w, TensorD(), 2, 0, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  // Scatter-add oracle: each input value lands on its own 2x2 block.
  std::vector<double> expected(16, 0.0);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      for (std::size_t di = 0; di < 2; ++di) {
        for (std::size_t dj = 0; dj < 2; ++dj) {
          expected[(2 * i + di) * 4 + 2 * j + dj] += x.data()[i * 2 + j];
        }
      }
    }
  }
  EXPECT_TRUE(std::equal(expected.begin(), expected.end(), y.data().begin()));
}

TEST(ConvTranspose2d, UnitStrideOneByOneIsIdentity) {
  Rng rng(4);
  auto x = random_tensor<double>({1, 1, 3, 4}, rng);
  auto y = conv_transpose2d(x, TensorD({1, 1, 1, 1}, {1.0}), TensorD(), 1, 0, 0);
  EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
}

TEST(ConvTranspose2d, OutputShapeFormula) {
  auto y = conv_transpose2d(TensorD::zeros({1, 1, 8, 16}), TensorD::zeros({1, 1, 3, 3}),
                            TensorD(), 2, 1, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 16, 32}));
}

TEST(ConvTranspose2d, OutputPaddingMustBeBelowStride) {
  EXPECT_THROW(conv_transpose2d(TensorD::zeros({1, 1, 2, 2}), TensorD::zeros({1, 1, 3, 3}),
                                TensorD(), 2, 1, 2),
               ParameterError);
}

TEST(ConvTranspose2d, InputGradientIsConvOfUpstream) {
  Rng rng(5);
  auto x = random_tensor<double>({2, 3, 4, 5}, rng, -1, 1, true);
  auto w = random_tensor<double>({3, 2, 3, 3}, rng);
  auto y = conv_transpose2d(x, w, TensorD(), 2, 1, 1);
  auto upstream = random_tensor<double>(y.shape(), rng);
  sum(mul(y, upstream)).backward();
  // The weight [C,F,kh,kw] read as a conv weight maps F channels to C.
  auto expected = conv2d(upstream, w, TensorD(), 2, 1);
  ASSERT_EQ(expected.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_NEAR(x.grad()[i], expected.data()[i], 1e-12);
  }
}

// ---- pooling ----------------------------------------------------------------

TEST(Pooling, MaxAndAverageOfTwoByTwo) {
  auto x = TensorD({1, 1, 2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(max_pool2d(x, 2, 2).item(), 4.0);
  EXPECT_EQ(avg_pool2d(x, 2, 2).item(), 2.5);
}

TEST(Pooling, KernelLargerThanInputIsDimensionError) {
  EXPECT_THROW(max_pool2d(TensorD::zeros({1, 1, 2, 3}), 3, 1), DimensionError);
  EXPECT_THROW(avg_pool2d(TensorD::zeros({1, 1, 3, 2}), 3, 1), DimensionError);
}

TEST(Pooling, MaxPoolTiesRouteToFirstElement) {
  auto x = TensorD::full({1, 1, 4, 4}, 0.5, true);
  sum(max_pool2d(x, 2, 2)).backward();
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const bool first = i % 2 == 0 && j % 2 == 0;
      EXPECT_EQ(x.grad()[i * 4 + j], first ? 1.0 : 0.0) << i << "," << j;
    }
  }
  // Finite differences agree with the chosen rule: bumping the first element
  // of a window raises the window max, bumping any other one does not.
  const double eps = 1e-3;
  const auto window_max_after = [&](std::size_t idx) {
    auto y = TensorD::full({1, 1, 4, 4}, 0.5);
    y.mutable_data()[idx] += eps;
    return max_pool2d(y, 2, 2).data()[0];
  };
  EXPECT_NEAR((window_max_after(0) - 0.5) / eps, 1.0, 1e-9);
  EXPECT_NEAR(max_pool2d(TensorD::full({1, 1, 4, 4}, 0.5), 2, 2).data()[0], 0.5, 0.0);
}

TEST(Pooling, MaxPoolGradientMassGoesToOneElementPerWindow) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor<double>({2, 3, 6, 6}, rng, -1, 1, true);
    const double ties = rng.bernoulli(0.5) ? 1.0 : 0.0;
    if (ties > 0) {
      for (auto& v : x.mutable_data()) v = std::round(v * 2) / 2;
    }
    auto y = max_pool2d(x, 2, 2);
    sum(y).backward();
    std::size_t nonzero = 0;
    double mass = 0;
    for (double g : x.grad()) {
      nonzero += g != 0.0;
      mass += g;
    }
    EXPECT_EQ(nonzero, y.numel());
    EXPECT_DOUBLE_EQ(mass, static_cast<double>(y.numel()));
  }
}

// ---- batch norm -------------------------------------------------------------

TEST(BatchNorm, StandardisedInputPassesThrough) {
  // Per channel: values {-1, 1} repeated, mean 0, variance 1.
  std::vector<double> v;
  for (int ch = 0; ch < 2; ++ch) {
    for (int i = 0; i < 8; ++i) v.push_back(i % 2 ? 1.0 : -1.0);
  }
  auto x = TensorD({1, 2, 2, 4}, v);
  auto buffers = BatchNormBuffers<double>::create(2);
  auto y = batch_norm2d(x, TensorD::full({2}, 1.0), TensorD::zeros({2}), buffers, Mode::train);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(y.data()[i], v[i], 1e-5);
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
  Rng rng(7);
  auto x = random_tensor<double>({2, 3, 2, 2}, rng);
  auto y = batch_norm2d(x, TensorD::zeros({3}), TensorD({3}, {0.5, -1.0, 2.0}),
                        BatchNormBuffers<double>::create(3), Mode::train);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(y.data()[(b * 3 + c) * 4 + i], (std::vector<double>{0.5, -1.0, 2.0})[c]);
      }
    }
  }
}

TEST(BatchNorm, TrainModeStatistics) {
  Rng rng(8);
  auto x = random_tensor<double>({2, 3, 4, 4}, rng, -3.0, 5.0);
  auto y = batch_norm2d(x, TensorD::full({3}, 1.0), TensorD::zeros({3}),
                        BatchNormBuffers<double>::create(3), Mode::train);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, ss = 0;
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t i = 0; i < 16; ++i) {
        const double v = y.data()[(b * 3 + c) * 16 + i];
        s += v;
        ss += v * v;
      }
    }
    const double mean = s / 32, var = ss / 32 - mean * mean;
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(BatchNorm, EvalBeforeTrainIsStateError) {
  auto buffers = BatchNormBuffers<double>::create(1);
  EXPECT_THROW(batch_norm2d(TensorD::zeros({1, 1, 2, 2}), TensorD::full({1}, 1.0),
                            TensorD::zeros({1}), buffers, Mode::eval),
               StateError);
  batch_norm2d(TensorD({1, 1, 2, 2}, {1, 2, 3, 4}), TensorD::full({1}, 1.0), TensorD::zeros({1}),
               buffers, Mode::train);
  EXPECT_EQ(buffers.tracked.item(), 1.0);
  EXPECT_DOUBLE_EQ(buffers.running_mean.item(), 2.5);
  auto y = batch_norm2d(TensorD({1, 1, 1, 1}, {2.5}), TensorD::full({1}, 1.0), TensorD::zeros({1}),
                        buffers, Mode::eval);
  EXPECT_DOUBLE_EQ(y.item(), 0.0);
}

TEST(BatchNorm, ChannelMismatchIsDimensionError) {
  EXPECT_THROW(batch_norm2d(TensorD::zeros({1, 2, 2, 2}), TensorD::full({3}, 1.0),
                            TensorD::zeros({3}), BatchNormBuffers<double>::create(3), Mode::train),
               DimensionError);
}

// ---- elementwise, concat, softmax --------------------------------------------

TEST(Softmax, EqualLogitsAreUniform) {
  auto p = softmax_channel(TensorD({1, 2, 1, 1}, {0.3, 0.3}));
  EXPECT_DOUBLE_EQ(p.data()[0], 0.5);
  EXPECT_DOUBLE_EQ(p.data()[1], 0.5);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  auto p = softmax_channel(TensorF({1, 2, 1, 1}, {1000.0f, 0.0f}));
  EXPECT_FLOAT_EQ(p.data()[0], 1.0f);
  EXPECT_FLOAT_EQ(p.data()[1], 0.0f);
  EXPECT_TRUE(std::isfinite(p.data()[0]));
}

TEST(Softmax, SumsToOneForRandomLogits) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    auto logits = random_tensor<float>({2, 19, 3, 4}, rng, -60.0, 60.0);
    auto p = softmax_channel(logits);
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t i = 0; i < 12; ++i) {
        double s = 0;
        for (std::size_t c = 0; c < 19; ++c) {
          const float v = p.data()[(b * 19 + c) * 12 + i];
          EXPECT_GE(v, 0.0f);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
    }
  }
}

TEST(Concat, PreservesValuesPositionally) {
  Rng rng(10);
  auto a = random_tensor<float>({1, 64, 2, 2}, rng);
  auto b = random_tensor<float>({1, 64, 2, 2}, rng);
  auto c = concat_channels<float>({a, b});
  ASSERT_EQ(c.shape(), (Shape{1, 128, 2, 2}));
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), c.data().begin()));
  EXPECT_TRUE(std::equal(b.data().begin(), b.data().end(), c.data().begin() + 256));
}

TEST(Elementwise, ShapeMismatchIsDimensionError) {
  EXPECT_THROW(add(TensorD::zeros({1, 2}), TensorD::zeros({2, 1})), DimensionError);
  EXPECT_THROW(concat_channels<double>({TensorD::zeros({1, 1, 2, 2}), TensorD::zeros({1, 1, 2, 3})}),
               DimensionError);
}

TEST(Elementwise, ReluAndAdd) {
  auto r = relu(TensorD({4}, {-1, 0, 2, -0.5}));
  EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()),
            (std::vector<double>{0, 0, 2, 0}));
  auto s = add(TensorD({2}, {1, 2}), TensorD({2}, {3, 4}));
  EXPECT_EQ(s.data()[1], 6.0);
}

// ---- weighted cross-entropy ----------------------------------------------------

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  const std::vector<std::uint8_t> labels{0, 5, 18, 3};
  auto loss = weighted_cross_entropy(TensorD::zeros({1, 19, 2, 2}), labels,
                                     std::span<const double>(), Reduction::mean);
  EXPECT_NEAR(loss.item(), std::log(19.0), 1e-12);
}

TEST(CrossEntropy, IgnoredPixelsAreMasked) {
  auto logits = TensorD({1, 2, 1, 2}, {2.0, -1.0, 0.5, 3.0});
  const std::vector<std::uint8_t> both{1, kIgnoreLabel};
  const std::vector<std::uint8_t> one{1};
  auto masked = weighted_cross_entropy(logits, both, std::span<const double>(), Reduction::mean);
  auto single = weighted_cross_entropy(TensorD({1, 2, 1, 1}, {2.0, 0.5}), one,
                                       std::span<const double>(), Reduction::mean);
  EXPECT_DOUBLE_EQ(masked.item(), single.item());
  CrossEntropyInfo info;
  const std::vector<std::uint8_t> none{kIgnoreLabel, kIgnoreLabel};
  auto empty = weighted_cross_entropy(logits, none, std::span<const double>(), Reduction::mean, &info);
  EXPECT_EQ(empty.item(), 0.0);
  EXPECT_EQ(info.valid_pixels, 0u);
}

// ---- gradcheck --------------------------------------------------------------

TEST(Gradcheck, SumOfSquaresPassesTightly) {
  Rng rng(20);
  auto report = gradcheck([](const std::vector<TensorD>& in) { return sum(mul(in[0], in[0])); },
                          {random_tensor<double>({3, 4}, rng)}, 1e-3, 1e-6);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
  EXPECT_EQ(report.entries.size(), 12u);
}

TEST(Gradcheck, FlagsCorruptedBackwardRule) {
  const auto broken_square = [](const TensorD& x) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= v;
    return make_op<double>("broken_square", x.shape(), std::move(out), {x},
                           [x](std::span<const double> gy, std::span<const std::span<double>> g) {
                             // Wrong: derivative of x^2 is 2x.
                             for (std::size_t i = 0; i < gy.size(); ++i) g[0][i] += gy[i] * x.data()[i];
                           });
  };
  Rng rng(21);
  auto report = gradcheck([&](const std::vector<TensorD>& in) { return sum(broken_square(in[0])); },
                          {random_tensor<double>({5}, rng, 0.5, 1.5)});
  EXPECT_FALSE(report.passed);
  EXPECT_GT(report.max_rel_error, 0.1);
}

TEST(Gradcheck, NeverThrows) {
  auto report = gradcheck([](const std::vector<TensorD>& in) { return relu(in[0]); },
                          {TensorD({2}, {1.0, 2.0})});
  EXPECT_FALSE(report.passed);
  EXPECT_FALSE(report.error.empty());
}

TEST(Gradcheck, EveryPrimitivePasses) {
  Rng rng(22);
  struct Case {
    const char* name;
    ScalarFunction f;
    std::vector<TensorD> inputs;
  };
  auto upstream4 = random_tensor<double>({2, 3, 4, 4}, rng);
  std::vector<Case> cases;
  cases.push_back({"conv2d",
                   [](const std::vector<TensorD>& in) {
                     auto y = conv2d(in[0], in[1], in[2], Conv2dParams{2, 1, 1, 1, 1, 2});
                     return sum(mul(y, y));
                   },
                   {random_tensor<double>({2, 2, 5, 6}, rng), random_tensor<double>({3, 2, 3, 2}, rng),
                    random_tensor<double>({3}, rng)}});
  cases.push_back({"conv_transpose2d",
                   [](const std::vector<TensorD>& in) {
                     auto y = conv_transpose2d(in[0], in[1], in[2], 2, 1, 1);
                     return sum(mul(y, y));
                   },
                   {random_tensor<double>({2, 2, 3, 3}, rng), random_tensor<double>({2, 3, 3, 3}, rng),
                    random_tensor<double>({3}, rng)}});
  cases.push_back({"max_pool2d",
                   [](const std::vector<TensorD>& in) {
                     auto y = max_pool2d(in[0], 2, 2);
                     return sum(mul(y, y));
                   },
                   {spread_tensor({2, 2, 4, 6}, rng)}});
  cases.push_back({"avg_pool2d",
                   [](const std::vector<TensorD>& in) {
                     auto y = avg_pool2d(in[0], 2, 2);
                     return sum(mul(y, y));
                   },
                   {random_tensor<double>({2, 2, 4, 6}, rng)}});
  cases.push_back({"batch_norm2d",
                   [upstream4](const std::vector<TensorD>& in) {
                     auto y = batch_norm2d(in[0], in[1], in[2], BatchNormBuffers<double>::create(3),
                                           Mode::train);
                     return sum(mul(y, upstream4));
                   },
                   {random_tensor<double>({2, 3, 4, 4}, rng), random_tensor<double>({3}, rng, 0.5, 1.5),
                    random_tensor<double>({3}, rng)}});
  cases.push_back({"relu",
                   [](const std::vector<TensorD>& in) {
                     auto y = relu(in[0]);
                     return sum(mul(y, y));
                   },
                   {spread_tensor({3, 5}, rng)}});
  cases.push_back({"softmax_channel",
                   [upstream4](const std::vector<TensorD>& in) {
                     return sum(mul(softmax_channel(in[0]), upstream4));
                   },
                   {random_tensor<double>({2, 3, 4, 4}, rng, -2, 2)}});
  cases.push_back({"concat_add",
                   [](const std::vector<TensorD>& in) {
                     auto c = concat_channels<double>({in[0], in[1]});
                     auto s = add(c, c);
                     return sum(mul(s, s));
                   },
                   {random_tensor<double>({1, 2, 2, 2}, rng), random_tensor<double>({1, 1, 2, 2}, rng)}});
  cases.push_back({"sigmoid_log_clamp",
                   [](const std::vector<TensorD>& in) {
                     return mean(log(clamp(sigmoid(in[0]), 1e-7, 1.0 - 1e-7)));
                   },
                   {random_tensor<double>({6}, rng, -2, 2)}});
  cases.push_back({"leaky_relu_gap",
                   [](const std::vector<TensorD>& in) {
                     auto y = global_avg_pool2d(leaky_relu(in[0], 0.2));
                     return sum(mul(y, y));
                   },
                   {spread_tensor({2, 2, 3, 3}, rng)}});
  cases.push_back({"weighted_cross_entropy",
                   [](const std::vector<TensorD>& in) {
                     static const std::vector<std::uint8_t> labels{0, 2, 255, 1, 1, 0, 2, 2};
                     static const std::vector<double> w{0.5, 2.0, 1.25};
                     return weighted_cross_entropy(in[0], labels, std::span<const double>(w),
                                                   Reduction::mean);
                   },
                   {random_tensor<double>({2, 3, 2, 2}, rng, -2, 2)}});
  for (const auto& c : cases) {
    const auto report = gradcheck(c.f, c.inputs, 1e-3, 1e-4);
    EXPECT_TRUE(report.passed) << c.name << " max rel err " << report.max_rel_error << " "
                               << report.error;
  }
}

TEST(Gradcheck, CompositeConvBatchNormRelu) {
  Rng rng(23);
  auto report = gradcheck(
      [](const std::vector<TensorD>& in) {
        auto y = conv2d(in[0], in[1], in[2], 1, 1);
        y = batch_norm2d(y, in[3], in[4], BatchNormBuffers<double>::create(2), Mode::train);
        y = relu(y);
        return sum(mul(y, y));
      },
      {random_tensor<double>({2, 2, 4, 4}, rng), random_tensor<double>({2, 2, 3, 3}, rng),
       random_tensor<double>({2}, rng), random_tensor<double>({2}, rng, 0.5, 1.5),
       random_tensor<double>({2}, rng)});
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

// ---- adam -------------------------------------------------------------------

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<TensorF> params{TensorF({1}, {1.0f}, true)};
  params[0].mutable_grad()[0] = 1.0f;
  AdamState<float> state;
  adam_step<float>(params, state);
  EXPECT_NEAR(params[0].item(), 0.995, 1e-7);
  EXPECT_EQ(state.step_count, 1u);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::vector<TensorD> params{TensorD({3}, {1.0, -2.0, 0.5}, true)};
  params[0].mutable_grad();
  AdamState<double> state;
  adam_step<double>(params, state);
  EXPECT_EQ(params[0].data()[0], 1.0);
  EXPECT_EQ(params[0].data()[1], -2.0);
  EXPECT_EQ(state.zero_gradient_steps, 1u);
}

TEST(Adam, IdenticalInputsGiveBitwiseIdenticalUpdates) {
  Rng rng(30);
  auto a = random_tensor<float>({37}, rng, -1, 1, true);
  auto b = TensorF(a.shape(), {a.data().begin(), a.data().end()}, true);
  for (std::size_t i = 0; i < 37; ++i) {
    a.mutable_grad()[i] = b.mutable_grad()[i] = static_cast<float>(rng.uniform(-1, 1));
  }
  std::vector<TensorF> pa{a}, pb{b};
  AdamState<float> sa, sb;
  for (int s = 0; s < 3; ++s) {
    adam_step<float>(pa, sa);
    adam_step<float>(pb, sb);
  }
  EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), 37 * sizeof(float)), 0);
}

TEST(Adam, StepBeforeBackwardIsStateError) {
  std::vector<TensorF> params{TensorF({2}, {1.0f, 2.0f}, true)};
  AdamState<float> state;
  EXPECT_THROW(adam_step<float>(params, state), StateError);
}

// ---- determinism -------------------------------------------------------------

TEST(Determinism, ForwardBackwardIsBitwiseRepeatable) {
  const auto run = [] {
    Rng rng(40);
    auto x = random_tensor<float>({2, 3, 8, 8}, rng, -1, 1, true);
    auto w = random_tensor<float>({4, 3, 3, 3}, rng, -1, 1, true);
    auto y = relu(conv2d(x, w, TensorF(), 1, 1));
    auto loss = sum(mul(y, y));
    loss.backward();
    std::vector<float> out(w.grad().begin(), w.grad().end());
    out.push_back(loss.item());
    return out;
  };
  const auto a = run(), b = run();
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0);
}

TEST(DataParallel, SplitBatchGradientsMatchSerial) {
  Rng rng(41);
  auto x = random_tensor<double>({4, 2, 5, 5}, rng);
  auto w = random_tensor<double>({3, 2, 3, 3}, rng, -1, 1, true);
  sum(relu(conv2d(x, w, TensorD(), 1, 1))).backward();
  const std::vector<double> serial(w.grad().begin(), w.grad().end());
  w.zero_grad();
  for (std::size_t half = 0; half < 2; ++half) {
    std::vector<double> part(x.data().begin() + half * 100, x.data().begin() + (half + 1) * 100);
    sum(relu(conv2d(TensorD({2, 2, 5, 5}, part), w, TensorD(), 1, 1))).backward();
  }
  for (std::size_t i = 0; i < serial.size(); ++i) EXPECT_NEAR(w.grad()[i], serial[i], 1e-6);
}

// ---- parameters & checkpoints ---------------------------------------------------

TEST(Checkpoint, RoundTripPreservesBits) {
  Rng rng(50);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<CheckpointEntry> entries;
    const auto count = 1 + rng.below(4);
    for (std::size_t t = 0; t < count; ++t) {
      CheckpointEntry e;
      e.name = "layer" + std::to_string(t) + ".weight";
      const auto rank = 1 + rng.below(4);
      std::size_t n = 1;
      for (std::size_t r = 0; r < rank; ++r) {
        e.dims.push_back(static_cast<std::uint32_t>(1 + rng.below(4)));
        n *= e.dims.back();
      }
      for (std::size_t i = 0; i < n; ++i) e.values.push_back(static_cast<float>(rng.normal()));
      entries.push_back(e);
    }
    const auto bytes = encode_checkpoint(entries);
    EXPECT_EQ(encode_checkpoint(decode_checkpoint(bytes)), bytes);
  }
}

TEST(Checkpoint, ByteLayoutIsLittleEndian) {
  const auto bytes = encode_checkpoint({{"ab", {2}, {1.0f, -2.0f}}});
  const std::vector<std::uint8_t> expected{
      'F', 'O', 'G', 'W', 1, 0, 0, 0,  // magic, version
      1, 0, 0, 0,                      // tensor count
      2, 0, 0, 0, 'a', 'b',            // name
      1, 0, 0, 0, 2, 0, 0, 0,          // rank, dims
      0x00, 0x00, 0x80, 0x3f,          // 1.0f
      0x00, 0x00, 0x00, 0xc0};         // -2.0f
  EXPECT_EQ(bytes, expected);
}

TEST(Checkpoint, TruncationReportsOffset) {
  auto bytes = encode_checkpoint({{"w", {4}, {1, 2, 3, 4}}});
  bytes.resize(bytes.size() - 3);
  try {
    decode_checkpoint(bytes);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_EQ(e.byte_offset(), 25u);
  }
  EXPECT_THROW(decode_checkpoint({'N', 'O', 'P', 'E'}), IoError);
}

TEST(ParamStore, LoadRejectsMismatchNamingTheLayer) {
  ParamStore<float> a, b;
  a.add_parameter("enc.conv.weight", TensorF::zeros({2, 3}));
  a.add_batch_norm("enc.bn", 2);
  b.add_parameter("enc.conv.weight", TensorF::zeros({3, 3}));
  b.add_batch_norm("enc.bn", 2);
  try {
    b.load_checkpoint(a.to_checkpoint());
    FAIL() << "expected mismatch";
  } catch (const CheckpointMismatch& e) {
    EXPECT_EQ(e.layer(), "enc.conv.weight");
  }
  ParamStore<float> c;
  c.add_parameter("enc.conv.weight", TensorF::full({2, 3}, 7.0f));
  c.add_batch_norm("enc.bn", 2);
  a.load_checkpoint(c.to_checkpoint());
  EXPECT_TRUE(a.bitwise_equal(c));
  EXPECT_EQ(a.parameters().size(), 3u);  // weight, gamma, beta
}
