#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "npi/tensor.hpp"
#include "gradcheck.hpp"
#include "oracles/finite_diff.hpp"

using namespace npi;
using namespace npi::ad;
using T64 = Tensor<double>;

namespace {

std::vector<double> randn(std::size_t n, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST(TensorForward, MatmulIdentity) {
  std::mt19937_64 rng(1);
  const auto x = T64::from({3, 4}, randn(12, rng));
  const auto I = T64::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const auto y = matmul(I, x);
  for (std::size_t k = 0; k < 12; ++k) EXPECT_EQ(y.values()[k], x.values()[k]);
}

TEST(TensorForward, SoftmaxOfEqualScoresIsUniform) {
  const auto y = softmax(T64::full({2, 5}, 3.7));
  for (double v : y.values()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(TensorForward, SoftmaxIsStableForLargeScores) {
  const auto y = softmax(T64::from({1, 3}, {1000.0, 1000.0, 0.0}));
  EXPECT_NEAR(y.values()[0], 0.5, 1e-12);
  EXPECT_NEAR(y.values()[2], 0.0, 1e-12);
}

TEST(TensorForward, BroadcastAddOverLeadingDims) {
  const auto a = T64::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto b = T64::from({3}, {10, 20, 30});
  const auto y = add(a, b);
  EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()), (std::vector<double>{11, 22, 33, 14, 25, 36}));
}

TEST(TensorForward, ShapeErrorsNameBothShapes) {
  try {
    matmul(T64::zeros({2, 3}), T64::zeros({4, 5}));
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[4,5]"), std::string::npos);
    EXPECT_EQ(e.kind(), ErrorKind::shape_mismatch);
  }
  EXPECT_THROW(add(T64::zeros({2, 3}), T64::zeros({2})), Error);
  EXPECT_THROW(mse(T64::zeros({2, 3}), T64::zeros({3, 2})), Error);
}

TEST(TensorForward, ConvSamePaddingOnImpulse) {
  // A single-tap delta kernel reproduces the input.
  const auto x = T64::from({1, 1, 5}, {1, 2, 3, 4, 5});
  const auto w = T64::from({1, 1, 3}, {0, 1, 0});
  const auto y = conv1d(x, w, {}, 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 5}));
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(y.values()[k], x.values()[k]);
  const auto s = conv1d(x, T64::from({1, 1, 3}, {1, 1, 1}), {}, 2, 0);
  ASSERT_EQ(s.shape(), (Shape{1, 1, 2}));
  EXPECT_EQ(s.values()[0], 6.0);
  EXPECT_EQ(s.values()[1], 12.0);
}

TEST(TensorForward, NoGradModeMatchesGraphMode) {
  std::mt19937_64 rng(2);
  const auto x = T64::from({4, 3}, randn(12, rng), true);
  const auto w = T64::from({5, 3}, randn(15, rng), true);
  const auto with = ad::tanh(linear(x, w));
  T64 without;
  {
    NoGradGuard guard;
    without = ad::tanh(linear(x, w));
    EXPECT_FALSE(without.requires_grad());
  }
  EXPECT_TRUE(with.requires_grad());
  for (std::size_t k = 0; k < with.size(); ++k) EXPECT_EQ(with.values()[k], without.values()[k]);
}

TEST(TensorBackward, TanhSlopeAtZero) {
  const auto x = T64::from({1}, {0.0}, true);
  const auto g = backward(ad::tanh(x)).of(x);
  const double fd = (std::tanh(1e-5) - std::tanh(-1e-5)) / 2e-5;
  EXPECT_NEAR(g[0], 1.0, 1e-12);
  EXPECT_NEAR(g[0], fd, 1e-8);
}

TEST(TensorBackward, SumOfLinearGivesInputBroadcast) {
  // loss = sum(W·x) → dL/dW[o][i] = x[i]
  const auto x = T64::from({1, 3}, {1.5, -2.0, 0.25});
  const auto W = T64::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  const auto g = backward(sum(linear(x, W))).of(W);
  EXPECT_EQ(g, (std::vector<double>{1.5, -2.0, 0.25, 1.5, -2.0, 0.25}));
}

TEST(TensorBackward, ConstantLossGivesZeroGradients) {
  const auto W = T64::from({2, 2}, {1, 2, 3, 4}, true);
  const auto loss = sum(mul(W, T64::zeros({2, 2})));
  const auto g = backward(loss).of(W);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(TensorBackward, FanOutAccumulates) {
  const auto x = T64::from({1}, {3.0}, true);
  const auto g = backward(add(mul(x, x), x)).of(x);  // d(x² + x) = 2x + 1
  EXPECT_DOUBLE_EQ(g[0], 7.0);
}

TEST(TensorBackward, SingleShot) {
  const auto x = T64::from({1}, {3.0}, true);
  const auto loss = mul(x, x);
  backward(loss);
  try {
    backward(loss);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_argument);
  }
}

TEST(TensorBackward, RejectsNonScalarLossAndDetachedQuery) {
  const auto x = T64::from({2}, {1.0, 2.0}, true);
  EXPECT_THROW(backward(mul(x, x)), Error);
  const auto d = x.detach();
  const auto g = backward(sum(mul(x, x)));
  EXPECT_THROW(g.of(d), Error);
}

TEST(TensorBackward, LinearityInTheLoss) {
  std::mt19937_64 rng(5);
  const auto xv = randn(6, rng);
  auto grad_of = [&](double a, double b) {
    const auto x = T64::from({2, 3}, xv, true);
    const auto f = sum(ad::tanh(x));
    const auto h = sum(mul(x, x));
    return backward(add(scale(f, a), scale(h, b))).of(x);
  };
  const auto gf = grad_of(1, 0), gh = grad_of(0, 1), mix = grad_of(2.5, -0.75);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(mix[k], 2.5 * gf[k] - 0.75 * gh[k], 1e-10);
}

class GradCheck : public ::testing::TestWithParam<testutil::OpCase> {};

TEST_P(GradCheck, MatchesFiniteDifferences) {
  const auto& c = GetParam();
  EXPECT_LE(testutil::op_gradient_mismatch(c), 1.0);
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradCheck, ::testing::ValuesIn(testutil::op_cases()),
                         [](const auto& info) { return info.param.name; });

TEST(GradCheck, TwoLayerTanhNetworkHundredTrials) {
  for (unsigned trial = 0; trial < 100; ++trial)
    EXPECT_LE(testutil::op_gradient_mismatch({"net", {{4, 5}, {6, 5}, {6}, {2, 6}, {2}},
                                              [](auto& v) { return linear(ad::tanh(linear(v[0], v[1], v[2])), v[3], v[4]); },
                                              1000 + trial}),
              1.0);
}
