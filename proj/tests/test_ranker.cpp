#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <tuple>

#include "shortlist/config.hpp"
#include "shortlist/ranker.hpp"
#include "shortlist/synthfix.hpp"
#include "test_util.hpp"

using namespace shortlist;

namespace {

// Query "q" plus n candidates; every third candidate duplicates an earlier
// vector so exact score ties occur.
EmbeddingStore tied_store(std::mt19937_64& rng, std::size_t n, std::size_t d, std::vector<std::string>& pool) {
  std::vector<EmbeddingRecord> rs{testutil::rec("q", testutil::random_vec(rng, d), RecordKind::Query)};
  pool.clear();
  for (std::size_t i = 0; i < n; ++i) {
    Vec v = (i % 3 == 2) ? rs[1 + (rng() % i)].vector : testutil::random_vec(rng, d);
    const std::string id = "c" + std::to_string(rng() % 1000000) + "_" + std::to_string(i);
    rs.push_back(testutil::rec(id, v));
    pool.push_back(id);
  }
  return EmbeddingStore::from_records(rs);
}

std::vector<std::string> oracle_top(const EmbeddingStore& s, const std::vector<std::string>& pool, std::size_t k) {
  const auto q = s.vector("q");
  std::vector<std::tuple<double, std::string>> scored;
  for (const auto& id : pool) {
    const auto c = s.vector(id);
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) acc += q[i] * c[i];
    scored.emplace_back(-acc, id);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(std::get<1>(scored[i]));
  return out;
}

std::vector<std::string> ids_of(const RankedList& l) {
  std::vector<std::string> out;
  for (const auto& e : l.entries) out.push_back(e.cand_id);
  return out;
}

RankedList list_of(const std::vector<std::pair<std::string, double>>& xs) {
  RankedList l{"q", {}};
  for (const auto& [id, s] : xs) l.entries.push_back({id, s, std::nullopt, s});
  return l;
}

}  // namespace

TEST(Stage1, EqualVectorRanksFirst) {
  std::vector<EmbeddingRecord> rs{testutil::rec("q", {1, 2, 3}, RecordKind::Query), testutil::rec("same", {1, 2, 3}),
                                  testutil::rec("a", {3, 2, 1}), testutil::rec("b", {-1, 0, 0})};
  auto s = EmbeddingStore::from_records(rs);
  auto l = stage1_rank(s, "q", {"a", "b", "same"});
  EXPECT_EQ(l.entries.front().cand_id, "same");
  EXPECT_EQ(l.entries.front().s_cos, 1.0);
  EXPECT_FALSE(l.entries.front().s_boundary.has_value());
  EXPECT_EQ(l.entries.front().s_final, l.entries.front().s_cos);
}

TEST(Stage1, TopThreeMatchesOracle) {
  std::mt19937_64 rng(1);
  std::vector<std::string> pool;
  auto s = tied_store(rng, 20, 4, pool);
  auto l = stage1_rank(s, "q", pool, 3);
  EXPECT_EQ(ids_of(l), oracle_top(s, pool, 3));
  EXPECT_EQ(l.entries.size(), 3u);
}

TEST(Stage1, TiesBrokenById) {
  std::vector<EmbeddingRecord> rs{testutil::rec("q", {1, 0}, RecordKind::Query), testutil::rec("zeta", {1, 1}),
                                  testutil::rec("alpha", {1, 1}), testutil::rec("mid", {1, 1})};
  auto s = EmbeddingStore::from_records(rs);
  auto l = stage1_rank(s, "q", {"zeta", "mid", "alpha"});
  EXPECT_EQ(ids_of(l), (std::vector<std::string>{"alpha", "mid", "zeta"}));
}

TEST(Stage1, RandomPoolsMatchOracleIncludingTies) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::string> pool;
    const std::size_t n = 1 + rng() % 500;
    auto s = tied_store(rng, n, 2 + rng() % 6, pool);
    const std::size_t k = 1 + rng() % (n + 5);
    EXPECT_EQ(ids_of(stage1_rank(s, "q", pool, k)), oracle_top(s, pool, k));
  }
}

TEST(Stage1, HeapPathEqualsSort) {
  std::mt19937_64 rng(3);
  std::vector<std::string> pool;
  auto s = tied_store(rng, 12000, 3, pool);
  for (std::size_t k : {1u, 50u, 11999u}) {
    EXPECT_EQ(ids_of(stage1_rank(s, "q", pool, k)), oracle_top(s, pool, k)) << k;
  }
}

TEST(Stage1, Errors) {
  std::vector<EmbeddingRecord> rs{testutil::rec("q", {1, 0}, RecordKind::Query), testutil::rec("a", {1, 1})};
  auto s = EmbeddingStore::from_records(rs);
  auto code = [&](const std::vector<std::string>& pool, const std::string& q = "q") {
    try {
      stage1_rank(s, q, pool);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code({}), ErrorCode::EmptyPool);
  EXPECT_EQ(code({"a", "a"}), ErrorCode::DuplicateId);
  EXPECT_EQ(code({"ghost"}), ErrorCode::UnknownId);
  EXPECT_EQ(code({"a"}, "ghost"), ErrorCode::UnknownId);
}

TEST(Fusion, HandValue) {
  auto fused = fuse_with_scores(list_of({{"a", 0.8}}), {0.5}, 0.1);
  EXPECT_EQ(fused.entries[0].s_final, 0.75);
  EXPECT_EQ(*fused.entries[0].s_boundary, 0.5);
  EXPECT_EQ(fused.entries[0].s_cos, 0.8);
}

TEST(Fusion, BoundaryDemotionFlipsOrder) {
  auto fused = fuse_with_scores(list_of({{"a", 0.90}, {"b", 0.85}}), {0.9, 0.1}, 0.1);
  EXPECT_EQ(fused.entries[0].cand_id, "b");
  EXPECT_NEAR(fused.entries[0].s_final, 0.84, 1e-15);
  EXPECT_NEAR(fused.entries[1].s_final, 0.81, 1e-15);
}

TEST(Fusion, ZeroLambdaPreservesOrder) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::pair<std::string, double>> xs;
    const std::size_t n = 1 + rng() % 60;
    for (std::size_t i = 0; i < n; ++i) xs.emplace_back("c" + std::to_string(i), std::round(u(rng) * 20) / 20);
    RankedList l = list_of(xs);
    std::sort(l.entries.begin(), l.entries.end(), ranks_before);
    std::vector<double> b(n);
    for (double& x : b) x = u(rng);
    auto fused = fuse_with_scores(l, b, 0.0);
    EXPECT_EQ(ids_of(fused), ids_of(l));
  }
}

TEST(Fusion, DominanceOverLambdaRange) {
  // Higher cosine and lower boundary score rank first for every lambda.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const double ca = u(rng), cb = ca - 0.01 - 0.5 * u(rng);
    const double ba = 0.5 * u(rng), bb = ba + 0.01 + 0.4 * u(rng);
    for (double lambda : default_lambda_grid()) {
      auto fused = fuse_with_scores(list_of({{"z", ca}, {"a", cb}}), {ba, bb}, lambda);
      EXPECT_EQ(fused.entries[0].cand_id, "z");
    }
  }
}

TEST(Fusion, NegativeLambdaRejected) {
  EXPECT_THROW(fuse_with_scores(list_of({{"a", 0.5}}), {0.5}, -0.1), Error);
  EXPECT_THROW(fuse_with_scores(list_of({{"a", 0.5}}), {0.5, 0.1}, 0.1), Error);
}

TEST(Fusion, FuseRerankUsesHead) {
  std::vector<EmbeddingRecord> rs{testutil::rec("q", {1, 0}, RecordKind::Query), testutil::rec("a", {1, 1})};
  auto s = EmbeddingStore::from_records(rs);
  auto head = BoundaryHeadParams::zeros(2, 4);
  auto fused = fuse_rerank(stage1_rank(s, "q", {"a"}), head, s, FusionConfig{0.2, std::nullopt});
  EXPECT_EQ(*fused.entries[0].s_boundary, 0.5);
  EXPECT_DOUBLE_EQ(fused.entries[0].s_final, std::sqrt(0.5) - 0.1);
}

namespace {

struct Grid {
  EmbeddingStore store;
  std::vector<PoolJudgment> pools;
};

Grid small_grid() {
  std::vector<EmbeddingRecord> rs{testutil::rec("q", {1, 0, 0}, RecordKind::Query), testutil::rec("p", {1, 0.3, 0}),
                                  testutil::rec("n", {1, 0.2, 0}), testutil::rec("o", {0, 1, 0})};
  return {EmbeddingStore::from_records(rs), {{"q", {"p", "n", "o"}, {"p"}}}};
}

}  // namespace

TEST(GridSearch, SingletonGrid) {
  auto g = small_grid();
  auto r = grid_search_lambda(g.pools, g.store, BoundaryHeadParams::zeros(3, 4), {0.0}, 1);
  EXPECT_EQ(r.best_lambda, 0.0);
  ASSERT_EQ(r.table.size(), 1u);
}

TEST(GridSearch, TiesGoToSmallestLambda) {
  auto g = small_grid();
  auto r = grid_search_lambda(g.pools, g.store, BoundaryHeadParams::zeros(3, 4), {0.3, 0.1, 0.0, 0.2}, 1);
  EXPECT_EQ(r.best_lambda, 0.0);
  ASSERT_EQ(r.table.size(), 4u);
  EXPECT_EQ(r.table.front().first, 0.0);
  for (const auto& [l, rec] : r.table) EXPECT_EQ(rec, r.table.front().second);
}

TEST(GridSearch, Errors) {
  auto g = small_grid();
  auto h = BoundaryHeadParams::zeros(3, 4);
  try {
    grid_search_lambda(g.pools, g.store, h, {}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGrid);
  }
  g.pools[0].positives.clear();
  EXPECT_THROW(grid_search_lambda(g.pools, g.store, h, {0.0}, 1), Error);
}

TEST(GridSearch, FixtureHeadPicksPositiveLambda) {
  RunConfig rc;
  const auto fx = generate_fixture(rc.fixture);
  std::vector<PairRecord> pos, role;
  for (const auto& p : fx.pairs) {
    if (p.pair_type == PairType::SemanticPos) pos.push_back(p);
    if (p.pair_type == PairType::RoleNeg) role.push_back(p);
  }
  const auto set = build_boundary_pairs(pos, role, fx.store, rc.head.pairs);
  const auto head = train_boundary_head(fx.store, set.pairs, rc.head.train, rc.head.head).head;
  const auto r = grid_search_lambda(fx.pools, fx.store, head, default_lambda_grid(), 10);
  EXPECT_GT(r.best_lambda, 0.0);
  EXPECT_GT(r.table.back().second, r.table.front().second);
}

TEST(RankedFile, RoundTrip) {
  auto dir = testutil::scratch_dir("ranked");
  RankedList a = list_of({{"x", 0.9}, {"y", 0.4}});
  a.entries[1].s_boundary = 0.25;
  a.entries[1].s_final = 0.3;
  RankedList b{"q2", {{"z", 0.1, std::nullopt, 0.1}}};
  save_ranked(dir / "r.jsonl", {a, b});
  auto back = load_ranked(dir / "r.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(ids_of(back[0]), ids_of(a));
  EXPECT_EQ(back[0].entries[1].s_boundary, 0.25);
  EXPECT_FALSE(back[0].entries[0].s_boundary.has_value());
  EXPECT_EQ(back[1].query_id, "q2");
}

TEST(PoolsFile, RoundTrip) {
  auto dir = testutil::scratch_dir("pools");
  std::vector<PoolJudgment> ps{{"q", {"a", "b"}, {}}, {"r", {"c"}, {}}};
  save_pools(dir / "p.jsonl", ps);
  auto back = load_pools(dir / "p.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].pool, ps[0].pool);
  EXPECT_EQ(back[1].query_id, "r");
}
