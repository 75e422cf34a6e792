#include <gtest/gtest.h>

#include <cmath>

#include "fd_check.hpp"
#include "igan/autodiff.hpp"
#include "igan/conv.hpp"
#include "igan/ops.hpp"
#include "igan/rng.hpp"
#include "igan/tensor.hpp"

using namespace igan;

TEST(Tensor, BasicShapeAndData) {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6);
  EXPECT_EQ(t.dim(1), 3);
  EXPECT_FLOAT_EQ(t.at(4), 5.0f);
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), Error);
  EXPECT_THROW(Tensor({2, 0}), Error);
}

TEST(Rng, DeterministicAndStreamSeparated) {
  Rng a(42, "data/a"), b(42, "data/a"), c(42, "data/b");
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) any_diff |= (a.next() != c.next());
  EXPECT_TRUE(any_diff);
}

TEST(Rng, StateRoundTripIncludingNormalSpare) {
  Rng a(7, "s");
  for (int i = 0; i < 5; ++i) a.normal();  // odd count leaves a cached spare
  Rng b;
  b.load_state(a.save_state());
  EXPECT_TRUE(a == b);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(a.normal(), b.normal());
  EXPECT_EQ(a.draw_count(), b.draw_count());
}

TEST(Rng, UniformRangeAndNormalMoments) {
  Rng r(3, "m");
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  for (int i = 0; i < n; ++i) {
    double z = r.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, BelowIsInRange) {
  Rng r(9, "b");
  for (int i = 0; i < 1000; ++i) EXPECT_LT(r.below(17), 17u);
}

TEST(Autodiff, SquareGradient) {
  Var x = parameter(Tensor::scalar(3.0f));
  Var y = mul(x, x);
  GradMap g = backward(y, {x});
  EXPECT_FLOAT_EQ(grad_of(g, x).val().at(0), 6.0f);
}

TEST(Autodiff, FanOutAccumulates) {
  Var x = parameter(Tensor::scalar(2.5f));
  Var y = add(mul(x, x), x);  // x^2 + x -> 2x + 1
  GradMap g = backward(y, {x});
  EXPECT_FLOAT_EQ(grad_of(g, x).val().at(0), 6.0f);
}

TEST(Autodiff, SecondOrderThroughBackward) {
  // y = x^3; g = dy/dx = 3x^2 is itself a graph, so d(g)/dx = 6x.
  Var x = parameter(Tensor::scalar(2.0f));
  Var y = mul(x, mul(x, x));
  GradMap g1 = backward(y, {x});
  Var g = grad_of(g1, x);
  EXPECT_FLOAT_EQ(g.val().at(0), 12.0f);
  GradMap g2 = backward(sum_all(g), {x});
  EXPECT_FLOAT_EQ(grad_of(g2, x).val().at(0), 12.0f);  // 6x at x=2
}

TEST(Autodiff, PruningSkipsUnrequestedTargets) {
  Var x = parameter(Tensor::scalar(1.0f));
  Var w = parameter(Tensor::scalar(4.0f));
  Var y = mul(w, mul(x, x));
  GradMap g = backward(y, {x});
  EXPECT_TRUE(grad_of(g, x).defined());
  EXPECT_FALSE(grad_of(g, w).defined());
}

TEST(Autodiff, RootIndependentOfTarget) {
  Var x = parameter(Tensor::scalar(1.0f));
  Var z = parameter(Tensor::scalar(5.0f));
  Var y = mul(x, x);
  GradMap g = backward(y, {z});
  EXPECT_TRUE(g.empty());
}

TEST(Ops, BroadcastAndReduceRoundTrip) {
  Var a = parameter(Tensor::from({1, 3}, {1, 2, 3}));
  Var b = broadcast_to(a, {4, 3});
  EXPECT_EQ(b.val().dim(0), 4);
  EXPECT_FLOAT_EQ(b.val().at(5), 3.0f);  // row 1, col 2
  Var s = reduce_sum_to(b, {1, 3});
  for (int i = 0; i < 3; ++i)
    EXPECT_FLOAT_EQ(s.val().at(i), 4.0f * static_cast<float>(i + 1));
}

TEST(Ops, ScalarValues) {
  Var x = constant(Tensor::scalar(0.0f));
  EXPECT_NEAR(softplus(x).val().at(0), std::log(2.0), 1e-7);
  EXPECT_FLOAT_EQ(sigmoid_(x).val().at(0), 0.5f);
  Var big = constant(Tensor::scalar(80.0f));
  EXPECT_NEAR(softplus(big).val().at(0), 80.0, 1e-5);  // no overflow
  Var nbig = constant(Tensor::scalar(-80.0f));
  EXPECT_NEAR(softplus(nbig).val().at(0), 0.0, 1e-6);
}

TEST(Ops, MatmulMatchesNaive) {
  Rng r(5, "mm");
  Tensor a = r.normal_tensor({3, 4}), b = r.normal_tensor({4, 2});
  Var y = matmul(constant(a), constant(b));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) {
      float acc = 0;
      for (int k = 0; k < 4; ++k)
        acc += a.at(i * 4 + k) * b.at(k * 2 + j);
      EXPECT_NEAR(y.val().at(i * 2 + j), acc, 1e-5);
    }
}

TEST(Ops, ElementwiseFiniteDifference) {
  Rng r(11, "fd");
  Var x = parameter(r.normal_tensor({2, 3}));
  auto build = [&] {
    Var t = tanh_(x);
    Var s = sigmoid_(scale(x, 0.7f));
    Var q = softplus(add(x, mul(x, x)));
    Var l = log_(add_scalar(mul(x, x), 1.5f));
    Var rt = sqrt_(add_scalar(mul(x, x), 2.0f));
    Var lr = leaky_relu(x, 0.2f);
    Var ab = abs_(add_scalar(x, 0.3f));
    return sum_all(
        add(add(add(t, s), add(q, l)), add(rt, add(lr, ab))));
  };
  auto rep = test::fd_check({x}, build, 1e-2, 1e-6);
  EXPECT_GT(rep.checked, 0);
  EXPECT_LT(rep.max_rel_l2, 1e-3) << "checked " << rep.checked;
}

TEST(Ops, MatmulBroadcastFiniteDifference) {
  Rng r(13, "fd2");
  Var a = parameter(r.normal_tensor({3, 4}));
  Var b = parameter(r.normal_tensor({4, 2}));
  Var bias = parameter(r.normal_tensor({1, 2}));
  auto build = [&] {
    Var y = add(matmul(a, b), broadcast_to(bias, {3, 2}));
    return sum_all(mul(y, y));
  };
  auto rep = test::fd_check({a, b, bias}, build, 1e-2, 1e-6);
  EXPECT_LT(rep.max_rel_l2, 1e-3);
}

// Direct-definition convolution for cross-checking the GEMM path.
static Tensor naive_conv(const Tensor& x, const Tensor& w, int64_t s,
                         int64_t p) {
  const int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t Ho = (H + 2 * p - kh) / s + 1, Wo = (W + 2 * p - kw) / s + 1;
  Tensor y({B, Co, Ho, Wo});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t o = 0; o < Co; ++o)
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow) {
          float acc = 0;
          for (int64_t c = 0; c < Ci; ++c)
            for (int64_t u = 0; u < kh; ++u)
              for (int64_t v = 0; v < kw; ++v) {
                const int64_t ih = oh * s - p + u, iw = ow * s - p + v;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += x.at(x.idx4(b, c, ih, iw)) * w.at(w.idx4(o, c, u, v));
              }
          y.at(y.idx4(b, o, oh, ow)) = acc;
        }
  return y;
}

TEST(Conv, MatchesNaiveDirectConvolution) {
  Rng r(21, "conv");
  Tensor x = r.normal_tensor({2, 3, 8, 8});
  Tensor w = r.normal_tensor({4, 3, 4, 4});
  Var y = conv2d(constant(x), constant(w), 2, 1);
  Tensor ref = naive_conv(x, w, 2, 1);
  ASSERT_TRUE(y.val().same_shape(ref));
  for (int64_t i = 0; i < ref.numel(); ++i)
    EXPECT_NEAR(y.val().at(i), ref.at(i), 1e-4) << "at " << i;
}

TEST(Conv, TransposeMatchesScatterDefinition) {
  Rng r(23, "convt");
  Tensor x = r.normal_tensor({2, 3, 4, 4});
  Tensor w = r.normal_tensor({3, 2, 4, 4});  // [Ci, Co, kh, kw]
  Var y = conv2d_transpose(constant(x), constant(w), 2, 1);
  ASSERT_EQ(y.val().dim(2), 8);
  const int64_t B = 2, Ci = 3, Co = 2, H = 4, W = 4, k = 4, s = 2, p = 1;
  Tensor ref({B, Co, 8, 8});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < Ci; ++c)
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j)
          for (int64_t o = 0; o < Co; ++o)
            for (int64_t u = 0; u < k; ++u)
              for (int64_t v = 0; v < k; ++v) {
                const int64_t oh = i * s - p + u, ow = j * s - p + v;
                if (oh < 0 || oh >= 8 || ow < 0 || ow >= 8) continue;
                ref.at(ref.idx4(b, o, oh, ow)) +=
                    x.at(x.idx4(b, c, i, j)) * w.at(w.idx4(c, o, u, v));
              }
  for (int64_t i = 0; i < ref.numel(); ++i)
    EXPECT_NEAR(y.val().at(i), ref.at(i), 1e-4) << "at " << i;
}

TEST(Conv, FiniteDifferenceThroughBothDirections) {
  Rng r(27, "convfd");
  Var x = parameter(r.normal_tensor({1, 2, 6, 6}, 0.0, 0.5));
  Var w = parameter(r.normal_tensor({3, 2, 4, 4}, 0.0, 0.5));
  Var wt = parameter(r.normal_tensor({3, 2, 4, 4}, 0.0, 0.5));
  auto build = [&] {
    Var h = conv2d(x, w, 2, 1);                 // [1,3,3,3]
    Var u = conv2d_transpose(h, wt, 2, 1);      // [1,2,6,6]
    return mean_all(mul(u, u));
  };
  auto rep = test::fd_check({x, w, wt}, build, 1e-2, 1e-6);
  EXPECT_GT(rep.checked, 100);
  EXPECT_LT(rep.max_rel_l2, 1e-3) << "checked " << rep.checked;
}

TEST(Conv, RejectsBadGeometry) {
  Rng r(1, "g");
  Var x = constant(r.normal_tensor({1, 1, 7, 7}));
  Var w = constant(r.normal_tensor({1, 1, 4, 4}));
  EXPECT_THROW(conv2d(x, w, 2, 1), Error);  // (7+2-4) % 2 != 0
}
