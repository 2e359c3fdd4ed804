#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "shortlist/boundary_head.hpp"
#include "shortlist/synthfix.hpp"
#include "test_util.hpp"

using namespace shortlist;

namespace {

BoundaryHeadParams hand_head() {
  auto h = BoundaryHeadParams::zeros(1, 2);
  h.W1.values = {1, 0, 0, 0, 0, 0, 0, 1};
  h.W2.values = {1, 1};
  return h;
}

BoundaryHeadParams random_head(std::mt19937_64& rng, std::size_t d, std::size_t hidden) {
  auto h = BoundaryHeadParams::init(d, hidden, 0.0, rng());
  for (double& b : h.b1.values) b = testutil::random_vec(rng, 1, 0.3)[0];
  h.b2.values[0] = 0.1;
  return h;
}

Vec flatten(const BoundaryHeadParams& h) {
  return testutil::concat({&h.W1.values, &h.b1.values, &h.W2.values, &h.b2.values});
}

BoundaryHeadParams unflatten(BoundaryHeadParams h, ConstView p) {
  std::size_t o = 0;
  for (ParamTensor* t : h.tensors()) {
    for (double& x : t->values) x = p[o++];
  }
  return h;
}

Vec flat_grad(BoundaryHeadParams& h) { return testutil::concat({&h.W1.grad, &h.b1.grad, &h.W2.grad, &h.b2.grad}); }

}  // namespace

TEST(PairFeatures, Examples) {
  EXPECT_EQ(pair_features(Vec{1, 0}, Vec{0, 1}), (Vec{1, 0, 0, 1, 1, 1, 0, 0}));
  EXPECT_EQ(pair_features(Vec{1, 0}, Vec{1, 0}), (Vec{1, 0, 1, 0, 0, 0, 1, 0}));
  try {
    pair_features(Vec{1, 0}, Vec{1, 0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(HeadForward, ZeroHead) {
  auto h = BoundaryHeadParams::zeros(3, 8);
  std::mt19937_64 rng(1);
  EXPECT_EQ(forward(h, testutil::random_vec(rng, 12)), 0.0);
  EXPECT_EQ(boundary_score(h, testutil::random_unit(rng, 3), testutil::random_unit(rng, 3)), 0.5);
}

TEST(HeadForward, HandHead) {
  auto h = hand_head();
  EXPECT_DOUBLE_EQ(forward(h, Vec{1, 1, 0, 1}), 2.0);
  // q = c = (1): features (1, 1, 0, 1).
  EXPECT_NEAR(boundary_score(h, Vec{1.0}, Vec{1.0}), 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(boundary_score(h, Vec{1.0}, Vec{1.0}), 0.8808, 1e-4);
  EXPECT_THROW(forward(h, Vec{1, 1}), Error);
}

TEST(HeadForward, InferenceIsDeterministic) {
  std::mt19937_64 rng(2);
  auto h = BoundaryHeadParams::init(4, 16, 0.5, 3);
  auto x = testutil::random_vec(rng, 16);
  std::mt19937_64 r1(5), r2(99);
  EXPECT_EQ(forward(h, x, false, r1), forward(h, x, false, r2));
  EXPECT_EQ(forward(h, x), forward(h, x, false, r1));
}

TEST(HeadForward, InvertedDropoutScaling) {
  auto h = BoundaryHeadParams::zeros(1, 1000, 0.5);
  for (double& w : h.W1.values) w = 0.0;
  for (double& b : h.b1.values) b = 1.0;
  for (double& w : h.W2.values) w = 1e-3;
  std::mt19937_64 rng(7);
  auto a = head_forward(h, Vec{0, 0, 0, 0}, true, rng);
  std::size_t kept = 0;
  for (double m : a.mask) {
    EXPECT_TRUE(m == 0.0 || m == 2.0);
    kept += m > 0.0;
  }
  EXPECT_NEAR(a.logit, 2e-3 * static_cast<double>(kept), 1e-12);
  EXPECT_NEAR(static_cast<double>(kept), 500.0, 60.0);
  EXPECT_DOUBLE_EQ(forward(h, Vec{0, 0, 0, 0}), 1.0);
}

TEST(BoundaryScore, OrderSensitive) {
  std::mt19937_64 rng(3);
  auto h = BoundaryHeadParams::init(4, 32, 0.1, 4);
  auto q = testutil::random_unit(rng, 4), c = testutil::random_unit(rng, 4);
  EXPECT_NE(boundary_score(h, q, c), boundary_score(h, c, q));
  const double s = boundary_score(h, q, c);
  EXPECT_GT(s, 0.0);
  EXPECT_LT(s, 1.0);
}

TEST(HeadBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  int checked = 0;
  for (std::size_t d : {2u, 3u}) {
    for (std::size_t hidden : {2u, 4u}) {
      for (int t = 0; t < 6; ++t) {
        auto h = random_head(rng, d, hidden);
        const Vec x = pair_features(testutil::random_unit(rng, d), testutil::random_unit(rng, d));
        const int y = static_cast<int>(rng() % 2);
        auto acts = head_forward(h, x, false, rng);
        bool near_kink = false;
        for (double p : acts.pre) near_kink = near_kink || std::abs(p) < 1e-3;
        if (near_kink) continue;
        const auto bce = bce_loss(Vec{acts.logit}, std::vector<int>{y});
        head_backward(h, x, acts, bce.g_logits[0]);
        auto fd = finite_diff_grad(
            [&](ConstView p) { return bce_loss(Vec{forward(unflatten(h, p), x)}, std::vector<int>{y}).loss; },
            flatten(h));
        EXPECT_LE(testutil::norm_rel_err(flat_grad(h), fd), 1e-4) << "d=" << d << " hidden=" << hidden;
        ++checked;
      }
    }
  }
  EXPECT_GE(checked, 20);
}

TEST(HeadBackward, DroppedUnitsGetNoGradient) {
  auto h = BoundaryHeadParams::init(2, 50, 0.5, 1);
  for (double& b : h.b1.values) b = 1.0;
  std::mt19937_64 rng(3);
  const Vec x = pair_features(Vec{0.6, 0.8}, Vec{1, 0});
  auto acts = head_forward(h, x, true, rng);
  head_backward(h, x, acts, 1.0);
  for (std::size_t j = 0; j < h.hidden; ++j) {
    if (acts.mask[j] == 0.0) EXPECT_EQ(h.b1.grad[j], 0.0);
  }
}

namespace {

struct HeadFixture {
  Fixture fx;
  std::vector<PairRecord> pairs;
};

// Pairs whose role negatives sit far past the noise: linearly separable.
const HeadFixture& separable() {
  static const HeadFixture hf = [] {
    FixtureSpec s;
    s.noise_scale = 0.15;
    s.boundary_offset_scale = 0.8;
    HeadFixture out{generate_fixture(s), {}};
    for (const auto& p : out.fx.pairs) {
      if (p.pair_type == PairType::SemanticPos || p.pair_type == PairType::RoleNeg) out.pairs.push_back(p);
    }
    return out;
  }();
  return hf;
}

double accuracy(const BoundaryHeadParams& h, const EmbeddingStore& s, const std::vector<PairRecord>& ps) {
  std::size_t ok = 0;
  for (const auto& p : ps) {
    const double score = boundary_score(h, s.vector(p.query_id), s.vector(p.cand_id));
    ok += (score > 0.5) == (p.label == 1);
  }
  return static_cast<double>(ok) / static_cast<double>(ps.size());
}

}  // namespace

TEST(HeadTraining, SeparablePairsReachHighValidationAccuracy) {
  const auto& hf = separable();
  const auto fp = hf.fx.store.fingerprint();
  auto r = train_boundary_head(hf.fx.store, hf.pairs, head_train_defaults());
  EXPECT_EQ(hf.fx.store.fingerprint(), fp);
  ASSERT_FALSE(r.validation_pairs.empty());
  EXPECT_EQ(r.train_pairs.size() + r.validation_pairs.size(), hf.pairs.size());
  EXPECT_LE(r.trace.epochs.size(), 40u);
  EXPECT_GE(accuracy(r.head, hf.fx.store, r.validation_pairs), 0.95);
}

TEST(HeadTraining, SinglePairLogitRises) {
  const auto& hf = separable();
  PairRecord p = hf.pairs.front();
  p.label = 1;
  const Vec x = pair_features(hf.fx.store.vector(p.query_id), hf.fx.store.vector(p.cand_id));
  TrainConfig cfg = head_train_defaults();
  cfg.early_stop_patience = 100;
  double prev = forward(BoundaryHeadParams::init(hf.fx.store.dim(), 256, 0.1, 0), x);
  for (int e = 1; e <= 8; ++e) {
    cfg.max_epochs = e;
    auto r = train_boundary_head(hf.fx.store, {p}, cfg);
    const double logit = forward(r.head, x);
    EXPECT_GT(logit, prev) << "epochs=" << e;
    prev = logit;
  }
}

TEST(HeadTraining, Deterministic) {
  const auto& hf = separable();
  TrainConfig cfg = head_train_defaults();
  cfg.max_epochs = 3;
  auto a = train_boundary_head(hf.fx.store, hf.pairs, cfg);
  auto b = train_boundary_head(hf.fx.store, hf.pairs, cfg);
  EXPECT_EQ(flatten(a.head), flatten(b.head));
}

TEST(HeadTraining, Errors) {
  const auto& hf = separable();
  try {
    train_boundary_head(hf.fx.store, {}, head_train_defaults());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCorpus);
  }
  try {
    train_boundary_head(hf.fx.store, {{"q0", "ghost", PairType::RoleNeg, 1}}, head_train_defaults());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnresolvableId);
  }
}

TEST(HeadCheckpoint, RoundTrip) {
  std::mt19937_64 rng(6);
  auto h = random_head(rng, 3, 5);
  auto dir = testutil::scratch_dir("head_ckpt");
  save_head(dir / "h.json", h);
  auto g = load_head(dir / "h.json");
  EXPECT_EQ(flatten(g), flatten(h));
  EXPECT_EQ(g.d, 3u);
  EXPECT_EQ(g.hidden, 5u);
  auto j = to_json(h);
  j["W2"] = Vec{1.0};
  EXPECT_THROW(head_from_json(j), Error);
}
