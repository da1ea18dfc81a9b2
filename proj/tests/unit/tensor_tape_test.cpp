#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bnfree/error.hpp"
#include "bnfree/gradcheck.hpp"
#include "bnfree/ops.hpp"
#include "bnfree/tape.hpp"
#include "bnfree/tensor.hpp"

namespace bnfree {
namespace {

TEST(Tensor, OffsetsAreRowMajorKHWC) {
  Tensor t(Shape{2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120);
  EXPECT_EQ(t.offset(0, 0, 0, 1), 1);
  EXPECT_EQ(t.offset(0, 0, 1, 0), 5);
  EXPECT_EQ(t.offset(0, 1, 0, 0), 20);
  EXPECT_EQ(t.offset(1, 0, 0, 0), 60);
}

TEST(Tensor, DataSizeMustMatchShape) {
  EXPECT_THROW(Tensor(Shape{1, 2, 2, 1}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST(Tensor, FiniteCheck) {
  Tensor t(Shape{1, 1, 1, 3}, 1.0f);
  EXPECT_TRUE(t.all_finite());
  t[1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  t[1] = std::numeric_limits<float>::infinity();
  EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, SliceBatch) {
  Tensor t(Shape{3, 1, 1, 2}, std::vector<float>{0, 1, 2, 3, 4, 5});
  Tensor s = t.slice_batch(1, 2);
  EXPECT_EQ(s.shape(), (Shape{2, 1, 1, 2}));
  EXPECT_EQ(s[0], 2.0f);
  EXPECT_EQ(s[3], 5.0f);
}

TEST(Tape, LossIsLeafGivesUnitGradient) {
  Tape<double> tape;
  NodeId x = tape.leaf(Tensor64(Shape{1, 1, 1, 1}, 3.0));
  tape.backward(x);
  ASSERT_NE(tape.grad(x), nullptr);
  EXPECT_EQ((*tape.grad(x))[0], 1.0);
}

TEST(Tape, SumOfTwiceXHasGradientTwo) {
  Tape<double> tape;
  NodeId x = tape.leaf(Tensor64(Shape{1, 1, 1, 4}, std::vector<double>{1, -2, 3, 0.5}));
  NodeId two_x = add(tape, x, x);
  tape.backward(sum(tape, two_x));
  const Tensor64& g = *tape.grad(x);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(g[i], 2.0);
}

TEST(Tape, ConstantLeavesGetNoGradient) {
  Tape<double> tape;
  NodeId x = tape.leaf(Tensor64(Shape{1, 1, 1, 2}, 1.0));
  NodeId c = tape.leaf(Tensor64(Shape{1, 1, 1, 2}, 5.0), false);
  tape.backward(sum(tape, add(tape, x, c)));
  EXPECT_NE(tape.grad(x), nullptr);
  EXPECT_EQ(tape.grad(c), nullptr);
}

TEST(Tape, BackwardRequiresScalarLoss) {
  Tape<double> tape;
  NodeId x = tape.leaf(Tensor64(Shape{1, 1, 1, 2}, 1.0));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(GradCheck, SquareAtThree) {
  ScalarGraph f = [](Tape<double>& t, NodeId x) {
    const double v = t.value(x)[0];
    return t.record(Tensor64(Shape{1, 1, 1, 1}, v * v), {x}, [](Tape<double>& tp, NodeId self) {
      const NodeId in = tp.inputs(self)[0];
      Tensor64 g(Shape{1, 1, 1, 1}, 2.0 * tp.value(in)[0] * (*tp.grad(self))[0]);
      tp.accumulate(in, g);
    });
  };
  Tensor64 x(Shape{1, 1, 1, 1}, 3.0);
  EXPECT_NEAR(analytic_gradient(f, x)[0], 6.0, 1e-12);
  EXPECT_NEAR(numeric_gradient(f, x)[0], 6.0, 1e-8);
  EXPECT_LT(finite_difference_check(f, x).max_rel_error, 1e-9);
}

TEST(GradCheck, DetectsWrongGradient) {
  ScalarGraph f = [](Tape<double>& t, NodeId x) {
    return t.record(Tensor64(Shape{1, 1, 1, 1}, t.value(x)[0] * 4.0), {x}, [](Tape<double>& tp, NodeId self) {
      tp.accumulate(tp.inputs(self)[0], Tensor64(Shape{1, 1, 1, 1}, 3.0 * (*tp.grad(self))[0]));
    });
  };
  EXPECT_GT(finite_difference_check(f, Tensor64(Shape{1, 1, 1, 1}, 1.0)).max_rel_error, 0.1);
}

}  // namespace
}  // namespace bnfree
