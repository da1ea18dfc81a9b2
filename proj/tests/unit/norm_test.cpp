#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bnfree/error.hpp"
#include "bnfree/norm.hpp"
#include "test_util.hpp"

namespace bnfree {
namespace {

using testing::random_tensor;

BasicBNParams<double> plain(int64_t c) { return BasicBNParams<double>::make(c, false); }

TEST(BatchNormTrain, TwoValues) {
  Tensor64 x(Shape{2, 1, 1, 1}, std::vector<double>{1, 3});
  auto r = batch_norm_train(x, plain(1));
  EXPECT_DOUBLE_EQ(r.stats.mean[0], 2.0);
  EXPECT_DOUBLE_EQ(r.stats.var[0], 1.0);
  const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(r.output[0], -expect, 1e-12);
  EXPECT_NEAR(r.output[1], expect, 1e-12);
  EXPECT_NEAR(r.output[1], 0.999995, 1e-6);
}

TEST(BatchNormTrain, GainAndShift) {
  Tensor64 x(Shape{2, 1, 1, 1}, std::vector<double>{1, 3});
  auto p = BasicBNParams<double>::make(1, true);
  p.gain = {2.0};
  p.shift = {5.0};
  p.epsilon = 1e-300;  // vanishing epsilon
  auto r = batch_norm_train(x, p);
  EXPECT_DOUBLE_EQ(r.output[0], 3.0);
  EXPECT_DOUBLE_EQ(r.output[1], 7.0);
}

TEST(BatchNormTrain, ConstantChannelGivesShift) {
  Tensor64 x(Shape{4, 2, 2, 1}, 7.25);
  auto p = BasicBNParams<double>::make(1, true);
  p.gain = {3.0};
  p.shift = {-0.5};
  const Tensor64 y = batch_norm_train(x, p).output;
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, -0.5);
}

TEST(BatchNormTrain, ChannelMismatchThrows) {
  Tensor64 x(Shape{2, 1, 1, 3});
  EXPECT_THROW(batch_norm_train(x, plain(2)), ShapeError);
}

TEST(BatchNormInfer, IdentityAndMeanInput) {
  auto p = plain(2);
  p.mean = {0.0, 1.5};
  p.var = {1.0, 4.0};
  p.epsilon = 1e-300;  // vanishing epsilon
  p.finalized = true;
  Tensor64 x(Shape{1, 1, 1, 2}, std::vector<double>{0.3, 1.5});
  Tensor64 y = batch_norm_infer(x, p);
  EXPECT_DOUBLE_EQ(y[0], 0.3);
  EXPECT_DOUBLE_EQ(y[1], 0.0);
}

TEST(BatchNormInfer, RequiresFinalizedStatistics) {
  Tensor64 x(Shape{1, 1, 1, 1});
  EXPECT_THROW(batch_norm_infer(x, plain(1)), StateError);
}

TEST(BatchNormInfer, MatchesTrainWhenStatisticsAgree) {
  std::mt19937_64 rng(5);
  Tensor64 x = random_tensor<double>(Shape{6, 3, 3, 4}, rng, -2, 3);
  auto p = BasicBNParams<double>::make(4, true);
  p.gain = {1.5, 0.5, -1.0, 2.0};
  p.shift = {0.1, 0.0, 0.3, -2.0};
  auto tr = batch_norm_train(x, p);
  p.mean = tr.stats.mean;
  p.var = tr.stats.var;
  p.finalized = true;
  EXPECT_LT(max_abs_diff(batch_norm_infer(x, p), tr.output), 1e-6);
}

TEST(MeanOnlyBN, Centres) {
  auto p = BasicBNParams<double>::make(1, false, true);
  Tensor64 x(Shape{2, 1, 1, 1}, std::vector<double>{1, 3});
  Tensor64 y = mean_only_bn(x, p, NormMode::kTrain);
  EXPECT_DOUBLE_EQ(y[0], -1.0);
  EXPECT_DOUBLE_EQ(y[1], 1.0);
  Tensor64 c(Shape{3, 2, 2, 1}, 4.0);
  const Tensor64 z = mean_only_bn(c, p, NormMode::kTrain);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(MeanOnlyBN, InferUsesFinalizedMean) {
  auto p = BasicBNParams<double>::make(1, false, true);
  p.mean = {2.0};
  p.var = {0.0};
  p.finalized = true;
  Tensor64 x(Shape{1, 1, 1, 1}, 5.0);
  EXPECT_DOUBLE_EQ(mean_only_bn(x, p, NormMode::kInfer)[0], 3.0);
}

TEST(Standardize, PerChannel) {
  Tensor64 x(Shape{1, 1, 1, 2}, std::vector<double>{3, 10});
  Tensor64 y = standardize(x, std::vector<double>{1, 4}, std::vector<double>{2, 3});
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_DOUBLE_EQ(y[1], 2.0);
}

// Property: normalized output has zero mean and variance s/(s+eps) per channel.
TEST(BatchNormTrain, MomentsOfOutput) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor64 x = random_tensor<double>(Shape{8, 4, 4, 3}, rng, -3.0 * (trial + 1), 5.0);
    auto r = batch_norm_train(x, plain(3));
    BatchStats out = channel_statistics(r.output);
    for (int c = 0; c < 3; ++c) {
      EXPECT_LT(std::abs(out.mean[c]), 1e-9);
      const double s = r.stats.var[c];
      EXPECT_NEAR(out.var[c], s / (s + 1e-5), 1e-9);
    }
  }
}

}  // namespace
}  // namespace bnfree
