#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "bnfree/error.hpp"
#include "bnfree/softmax.hpp"

namespace bnfree {
namespace {

TEST(Softmax, ClosedForm) {
  Tensor64 l(Shape{1, 1, 1, 2}, std::vector<double>{std::log(2.0), 0.0});
  Tensor64 p = softmax(l);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsStayFinite) {
  Tensor64 l(Shape{1, 1, 1, 3}, std::vector<double>{1000.0, 999.0, -1000.0});
  Tensor64 p = softmax(l);
  EXPECT_TRUE(p.all_finite());
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
}

TEST(SoftmaxXent, EqualLogitsGiveLogN) {
  Tape<double> t;
  NodeId l = t.leaf(Tensor64(Shape{2, 1, 1, 5}, 0.3));
  std::vector<int> labels{1, 4};
  auto r = softmax_xent(t, l, labels);
  EXPECT_NEAR(t.value(r.loss)[0], std::log(5.0), 1e-15);
  for (double v : r.probabilities.data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(SoftmaxXent, GradientIsProbabilityMinusOneHotOverBatch) {
  Tape<double> t;
  NodeId l = t.leaf(Tensor64(Shape{2, 1, 1, 3}, std::vector<double>{0.1, 0.5, -0.2, 1.0, 0.0, 0.3}));
  std::vector<int> labels{2, 0};
  auto r = softmax_xent(t, l, labels);
  t.backward(r.loss);
  const Tensor64& g = *t.grad(l);
  for (int k = 0; k < 2; ++k)
    for (int c = 0; c < 3; ++c) {
      const double onehot = labels[k] == c ? 1.0 : 0.0;
      EXPECT_NEAR(g[k * 3 + c], (r.probabilities[k * 3 + c] - onehot) / 2.0, 1e-15);
    }
}

TEST(SoftmaxXent, LabelOutOfRangeThrows) {
  Tape<double> t;
  NodeId l = t.leaf(Tensor64(Shape{1, 1, 1, 3}));
  std::vector<int> labels{3};
  EXPECT_THROW(softmax_xent(t, l, labels), ShapeError);
}

TEST(TemperatureSoftmax, ArgmaxAndEntropyAcrossTemperatures) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> d(0.0, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(10);
    for (double& v : z) v = d(rng);
    const auto best = std::max_element(z.begin(), z.end()) - z.begin();
    double last = -1.0;
    for (double T : {1.0, 10.0, 30.0, 100.0}) {
      auto p = temperature_softmax(z, T);
      EXPECT_EQ(std::max_element(p.begin(), p.end()) - p.begin(), best);
      const double h = shannon_entropy(p);
      EXPECT_GE(h, last);
      last = h;
    }
  }
}

TEST(TemperatureSoftmax, EntropyBounds) {
  std::vector<double> z{0.0, 0.0, 0.0, 0.0};
  EXPECT_NEAR(shannon_entropy(temperature_softmax(z, 3.0)), std::log(4.0), 1e-15);
  std::vector<double> onehot{1.0, 0.0, 0.0};
  EXPECT_EQ(shannon_entropy(onehot), 0.0);
}

}  // namespace
}  // namespace bnfree
