#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "shortlist/linalg.hpp"
#include "shortlist/optim.hpp"
#include "test_util.hpp"

using namespace shortlist;

TEST(Dot, BasisAndHandValues) {
  EXPECT_DOUBLE_EQ(dot(Vec{1, 0}, Vec{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(dot(Vec{1, 0}, Vec{0, 1}), 0.0);
  EXPECT_NEAR(dot(Vec{0.6, 0.8}, Vec{0.8, 0.6}), 0.96, 1e-15);
}

TEST(Dot, DimensionMismatchThrows) {
  try {
    dot(Vec{1, 0}, Vec{1, 0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Dot, Bilinear) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    Vec a = testutil::random_vec(rng, 6), b = testutil::random_vec(rng, 6);
    const double alpha = std::uniform_real_distribution<double>(-3, 3)(rng);
    Vec sa = a;
    for (double& x : sa) x *= alpha;
    EXPECT_NEAR(dot(sa, b), alpha * dot(a, b), 1e-12);
  }
}

TEST(Normalize, HandAndZero) {
  const Vec v = normalized(Vec{3, 4});
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[1], 0.8);
  EXPECT_THROW(normalized(Vec{0, 0}), Error);
}

TEST(Cosine, SelfIsExactlyOne) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    Vec a = testutil::random_vec(rng, 5);
    EXPECT_EQ(cosine(a, a), 1.0);
  }
}

TEST(CosineGrad, MatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    const Vec a = testutil::random_vec(rng, 4), b = testutil::random_vec(rng, 4);
    Vec ga(4, 0.0), gb(4, 0.0);
    accumulate_cosine_grad(a, b, 1.0, ga, gb);
    auto fa = finite_diff_grad([&](ConstView x) { return cosine(x, b); }, a);
    auto fb = finite_diff_grad([&](ConstView x) { return cosine(a, x); }, b);
    EXPECT_LE(testutil::max_rel_err(ga, fa), 1e-6);
    EXPECT_LE(testutil::max_rel_err(gb, fb), 1e-6);
  }
}

TEST(FiniteDiff, Square) {
  auto g = finite_diff_grad([](ConstView x) { return x[0] * x[0]; }, Vec{3.0});
  EXPECT_NEAR(g[0], 6.0, 1e-6);
}

TEST(FiniteDiff, ConstantIsZero) {
  auto g = finite_diff_grad([](ConstView) { return 4.2; }, Vec{1, 2, 3});
  for (double x : g) EXPECT_NEAR(x, 0.0, 1e-8);
}

TEST(FiniteDiff, SumIsOnes) {
  auto g = finite_diff_grad([](ConstView x) { return x[0] + x[1] + x[2]; }, Vec{0.3, -1, 5});
  for (double x : g) EXPECT_NEAR(x, 1.0, 1e-6);
}

TEST(ParamTensor, ShapeSizes) {
  ParamTensor t({3, 4});
  EXPECT_EQ(t.size(), 12u);
  EXPECT_EQ(t.grad.size(), 12u);
}

TEST(AdamW, ZeroGradNoDecayIsFixedPoint) {
  ParamTensor p({3});
  p.values = {1.0, -2.0, 0.5};
  AdamWState s(3, 0.1, 0.0);
  for (int i = 0; i < 5; ++i) adamw_step(p, s);
  EXPECT_EQ(p.values, (Vec{1.0, -2.0, 0.5}));
  EXPECT_EQ(s.step, 5);
}

TEST(AdamW, FirstStepHandValue) {
  ParamTensor p({1});
  p.values = {1.0};
  p.grad = {1.0};
  AdamWState s(1, 0.1, 0.0);
  adamw_step(p, s);
  // m_hat = v_hat = 1, update = 0.1 / (1 + 1e-8)
  EXPECT_NEAR(p.values[0], 1.0 - 0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p.values[0], 0.9, 1e-8);
}

TEST(AdamW, DecoupledDecayAppliedBeforeStep) {
  ParamTensor p({1});
  p.values = {2.0};
  p.grad = {0.0};
  AdamWState s(1, 0.1, 0.5);
  adamw_step(p, s);
  EXPECT_DOUBLE_EQ(p.values[0], 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(AdamW, NonFiniteGradientLeavesStateUntouched) {
  ParamTensor p({2});
  p.values = {1.0, 1.0};
  p.grad = {0.5, std::numeric_limits<double>::quiet_NaN()};
  AdamWState s(2, 0.1, 0.0);
  try {
    adamw_step(p, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteGradient);
  }
  EXPECT_EQ(p.values, (Vec{1.0, 1.0}));
  EXPECT_EQ(s.step, 0);

  ParamTensor a({1}), b({1});
  a.grad = {1.0};
  b.grad = {INFINITY};
  AdamW opt({&a, &b}, 0.1, 0.0);
  EXPECT_THROW(opt.step(), Error);
  EXPECT_EQ(a.values[0], 0.0);
}

TEST(AdamW, Deterministic) {
  auto run = [] {
    std::mt19937_64 rng(11);
    ParamTensor p({4});
    p.values = testutil::random_vec(rng, 4);
    AdamWState s(4, 0.01, 0.0);
    for (int i = 0; i < 20; ++i) {
      p.grad = testutil::random_vec(rng, 4);
      adamw_step(p, s);
    }
    return p.values;
  };
  EXPECT_EQ(run(), run());
}

TEST(AdamW, MinimizesQuadratic) {
  ParamTensor p({2});
  p.values = {3.0, -2.0};
  AdamW opt({&p}, 0.05, 0.0);
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    p.grad = {2.0 * p.values[0], 2.0 * p.values[1]};
    opt.step();
  }
  EXPECT_LT(std::abs(p.values[0]), 0.05);
  EXPECT_LT(std::abs(p.values[1]), 0.05);
}
