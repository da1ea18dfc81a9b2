#include <gtest/gtest.h>

#include <random>

#include "bnfree/error.hpp"
#include "bnfree/ops.hpp"
#include "test_util.hpp"

namespace bnfree {
namespace {

using testing::random_tensor;

// Direct nested-loop convolution used as a reference.
Tensor64 brute_conv(const Tensor64& x, const Tensor64& w, int stride, Padding pad) {
  const Shape xs = x.shape(), ws = w.shape();
  const auto geo = WindowGeometry::make(xs.h, xs.w, ws.k, ws.h, stride, pad);
  Tensor64 out(Shape{xs.k, geo.out_h, geo.out_w, ws.c});
  for (int64_t k = 0; k < xs.k; ++k)
    for (int64_t oy = 0; oy < geo.out_h; ++oy)
      for (int64_t ox = 0; ox < geo.out_w; ++ox)
        for (int64_t co = 0; co < ws.c; ++co) {
          double acc = 0.0;
          for (int64_t r = 0; r < ws.k; ++r)
            for (int64_t s = 0; s < ws.h; ++s) {
              const int64_t iy = oy * stride - geo.pad_top + r;
              const int64_t ix = ox * stride - geo.pad_left + s;
              if (iy < 0 || ix < 0 || iy >= xs.h || ix >= xs.w) continue;
              for (int64_t ci = 0; ci < xs.c; ++ci) acc += x.at(k, iy, ix, ci) * w.at(r, s, ci, co);
            }
          out.at(k, oy, ox, co) = acc;
        }
  return out;
}

TEST(Conv, ScalarProduct) {
  Tensor in(Shape{1, 1, 1, 1}, 2.0f), w(Shape{1, 1, 1, 1}, 3.0f);
  EXPECT_EQ(conv2d(in, w, 1, Padding::same())[0], 6.0f);
}

TEST(Conv, AllOnesPatchSums) {
  Tensor in(Shape{1, 3, 3, 1}, 1.0f), w(Shape{3, 3, 1, 1}, 1.0f);
  Tensor out = conv2d(in, w, 1, Padding::same());
  EXPECT_EQ(out.at(0, 1, 1, 0), 9.0f);
  EXPECT_EQ(out.at(0, 0, 0, 0), 4.0f);
  EXPECT_EQ(out.at(0, 2, 2, 0), 4.0f);
  EXPECT_EQ(out.at(0, 0, 1, 0), 6.0f);
}

TEST(Conv, StrideTwoSameShape) {
  Tensor in(Shape{1, 4, 4, 1}, 1.0f), w(Shape{3, 3, 1, 1}, 1.0f);
  EXPECT_EQ(conv2d(in, w, 2, Padding::same()).shape(), (Shape{1, 2, 2, 1}));
}

TEST(Conv, ChannelMismatchThrows) {
  Tensor in(Shape{1, 4, 4, 2}), w(Shape{3, 3, 3, 1});
  EXPECT_THROW(conv2d(in, w, 1, Padding::same()), ShapeError);
}

TEST(Conv, MatchesBruteForceOnRandomConfigs) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> hw(1, 9), ch(1, 6), ker(0, 2), str(1, 2), padpick(0, 2);
  for (int trial = 0; trial < 40; ++trial) {
    const int r = 2 * ker(rng) + 1;
    const int stride = str(rng);
    const Padding pad = padpick(rng) == 0 ? Padding::exact(r / 2) : Padding::same();
    const int64_t h = hw(rng) + (r - 1), w = hw(rng) + (r - 1);
    Tensor64 x = random_tensor<double>(Shape{2, h, w, ch(rng)}, rng);
    Tensor64 wt = random_tensor<double>(Shape{r, r, x.shape().c, ch(rng)}, rng);
    EXPECT_LT(max_abs_diff(conv2d(x, wt, stride, pad), brute_conv(x, wt, stride, pad)), 1e-12) << trial;
  }
}

TEST(Add, Elementwise) {
  Tape<double> t;
  NodeId a = t.leaf(Tensor64(Shape{1, 1, 1, 2}, std::vector<double>{1, 2}));
  NodeId b = t.leaf(Tensor64(Shape{1, 1, 1, 2}, std::vector<double>{3, 4}));
  const Tensor64 s = t.value(add(t, a, b));
  EXPECT_EQ(s[0], 4.0);
  EXPECT_EQ(s[1], 6.0);
  NodeId z = t.leaf(Tensor64(Shape{1, 1, 1, 2}, 0.0));
  const Tensor64 az = t.value(add(t, a, z));
  EXPECT_EQ(az, t.value(a));
}

TEST(Add, ShapeMismatchThrows) {
  Tape<double> t;
  NodeId a = t.leaf(Tensor64(Shape{1, 1, 1, 2}));
  NodeId b = t.leaf(Tensor64(Shape{1, 1, 1, 3}));
  EXPECT_THROW(add(t, a, b), ShapeError);
}

TEST(GlobalAveragePool, Mean) {
  Tensor x(Shape{1, 2, 2, 1}, std::vector<float>{1, 2, 3, 4});
  EXPECT_FLOAT_EQ(global_average_pool(x)[0], 2.5f);
  Tensor c(Shape{2, 3, 3, 2}, 0.75f);
  Tensor g = global_average_pool(c);
  EXPECT_EQ(g.shape(), (Shape{2, 1, 1, 2}));
  for (float v : g.data()) EXPECT_FLOAT_EQ(v, 0.75f);
}

TEST(MaxPool, PaddedSitesNeverWin) {
  Tensor x(Shape{1, 2, 2, 1}, -5.0f);
  x[3] = -1.0f;
  Tensor y = max_pool(x, 3, 2, Padding::exact(1));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], -1.0f);
}

TEST(Shortcut, AveragesAndZeroFills) {
  Tensor x(Shape{1, 2, 2, 1}, std::vector<float>{1, 2, 3, 4});
  Tensor y = shortcut_downsample(x, 2, 3);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 3}));
  EXPECT_FLOAT_EQ(y[0], 2.5f);
  EXPECT_EQ(y[1], 0.0f);
  EXPECT_EQ(y[2], 0.0f);
}

TEST(Shortcut, IdentityAtStrideOne) {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor(Shape{2, 3, 3, 4}, rng);
  EXPECT_EQ(shortcut_downsample(x, 1, 4), x);
}

TEST(Geometry, SameCeilAndExplicit) {
  auto g = WindowGeometry::make(7, 7, 3, 3, 2, Padding::same());
  EXPECT_EQ(g.out_h, 4);
  EXPECT_EQ(g.pad_top, 1);
  auto e = WindowGeometry::make(224, 224, 7, 7, 2, Padding::exact(3));
  EXPECT_EQ(e.out_h, 112);
}

}  // namespace
}  // namespace bnfree
