#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "shortlist/corpus.hpp"
#include "shortlist/eval.hpp"
#include "shortlist/ranker.hpp"
#include "shortlist/vector_store.hpp"

namespace shortlist {

/// Generator settings. Pool composition per evaluation query is 10%
/// positives, 15% role-boundary negatives, 5% constraint negatives and the
/// rest drawn from other clusters.
struct FixtureSpec {
  std::size_t dim = 32;
  std::size_t n_queries = 30;
  std::size_t pool_per_query = 100;
  std::size_t n_clusters = 10;
  double boundary_offset_scale = 0.45;
  double noise_scale = 0.55;
  std::int64_t seed = 7;
  // Supervision generated per training query (training queries are distinct
  // from the evaluation queries).
  std::size_t train_positives = 40;
  std::size_t train_role_negs = 40;
  std::size_t train_cons_negs = 3;
  std::size_t train_cards = 2;
  double query_spread = 0.5;
  std::size_t boundary_axes = 4;
};

struct Fixture {
  EmbeddingStore store;
  std::vector<PairRecord> pairs;  // training supervision, all four pair types
  std::vector<GroupRecord> groups;
  std::vector<TripletRecord> triplets;
  std::vector<QueryJudgment> judgments;   // evaluation queries
  std::vector<PoolJudgment> pools;        // evaluation pools (positives filled)
  std::vector<PairRecord> heldout_pairs;  // pool positives (0) and role negatives (1)
  std::vector<Vec> boundary_directions;   // one unit vector per cluster, mixed from shared axes
  std::map<std::string, std::size_t> cluster_of;  // every query id
  std::size_t constraint_block = 0;       // flipped trailing coordinates
};

inline void validate(const FixtureSpec& s) {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidSpec, m); };
  if (s.dim < 8) bad("dim must be at least 8");
  if (s.n_queries < 1 || s.pool_per_query < 1 || s.n_clusters < 1) bad("counts must be >= 1");
  if (s.pool_per_query < 20) bad("pool_per_query must be at least 20");
  if (s.n_clusters < 2) bad("need at least two clusters for cross-cluster candidates");
  if (s.boundary_axes < 1) bad("boundary_axes must be >= 1");
  if (s.n_clusters + s.boundary_axes + (s.dim + 7) / 8 > s.dim) bad("dim too small for orthogonal boundary axes");
  if (!(s.boundary_offset_scale > 0.0) || !(s.noise_scale > 0.0) || !(s.query_spread > 0.0)) {
    bad("scales must be > 0");
  }
  if (s.train_positives < 1 || s.train_role_negs < 1 || s.train_cons_negs < 1) {
    bad("training supervision counts must be >= 1");
  }
}

namespace detail {

inline const std::vector<std::string>& title_words() {
  static const std::vector<std::string> w{"backend", "frontend", "data",     "ml",      "devops",
                                          "mobile",  "security", "qa",       "embedded", "cloud",
                                          "network", "database", "graphics", "payments", "search"};
  return w;
}

inline std::string cluster_word(std::size_t k) {
  const auto& w = title_words();
  return k < w.size() ? w[k] : "field" + std::to_string(k);
}

inline std::string join(const std::vector<std::string>& toks) {
  std::string s;
  for (const auto& t : toks) s += (s.empty() ? "" : " ") + t;
  return s;
}

class FixtureBuilder {
 public:
  explicit FixtureBuilder(const FixtureSpec& s) : spec_(s) {}

  Fixture build() {
    Fixture fx;
    fx.constraint_block = (spec_.dim + 7) / 8;
    make_geometry(fx);
    for (std::size_t i = 0; i < spec_.n_queries; ++i) make_training_query(fx, i);
    for (std::size_t i = 0; i < spec_.n_queries; ++i) make_eval_query(fx, i);
    fx.store = EmbeddingStore::from_records(std::move(records_), spec_.dim);
    return fx;
  }

 private:
  using Rng = std::mt19937_64;

  Vec gaussian(Rng& rng, double scale) const {
    std::normal_distribution<double> n(0.0, scale / std::sqrt(static_cast<double>(spec_.dim)));
    Vec v(spec_.dim);
    for (double& x : v) x = n(rng);
    return v;
  }

  static Vec add(ConstView a, ConstView b, double s = 1.0) {
    Vec out(a.begin(), a.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * b[i];
    return out;
  }

  void make_geometry(Fixture& fx) {
    Rng rng(static_cast<std::uint64_t>(spec_.seed));
    std::normal_distribution<double> n(0.0, 1.0);
    auto random_unit = [&] {
      Vec v(spec_.dim);
      for (double& x : v) x = n(rng);
      return normalized(v);
    };
    for (std::size_t k = 0; k < spec_.n_clusters; ++k) centers_.push_back(random_unit());
    // Boundary axes: orthonormal, zero on the constraint block and orthogonal
    // to every center. Working in the masked coordinates is enough because a
    // direction with a zero block only sees the masked centers. Each cluster's
    // boundary direction is a random unit mix of the shared axes.
    std::vector<Vec> basis = centers_;
    std::vector<Vec> axes;
    for (std::size_t k = 0; k < spec_.boundary_axes; ++k) {
      Vec v = random_unit();
      for (std::size_t i = spec_.dim - fx.constraint_block; i < spec_.dim; ++i) v[i] = 0.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (const Vec& b : basis) {
          Vec bm = b;
          for (std::size_t i = spec_.dim - fx.constraint_block; i < spec_.dim; ++i) bm[i] = 0.0;
          const double bn = dot(bm, bm);
          if (bn < 1e-12) continue;
          const double c = dot(v, bm) / bn;
          for (std::size_t i = 0; i < spec_.dim; ++i) v[i] -= c * bm[i];
        }
      }
      v = normalized(v);
      axes.push_back(v);
      basis.push_back(v);
    }
    for (std::size_t k = 0; k < spec_.n_clusters; ++k) {
      Vec v(spec_.dim, 0.0);
      for (const Vec& a : axes) v = add(v, a, n(rng));
      fx.boundary_directions.push_back(normalized(v));
    }
  }

  std::vector<std::string> responsibilities_for(std::size_t k, Rng& rng, std::size_t count) const {
    std::vector<std::size_t> idx(12);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < count; ++i) {
      out.push_back("k" + std::to_string(k) + "_duty" + std::to_string(idx[i]));
    }
    return out;
  }

  /// Replaces `swaps` of the query's duties with other duties of the cluster.
  std::vector<std::string> perturb_duties(std::size_t k, const std::vector<std::string>& base,
                                          std::size_t swaps, Rng& rng) const {
    std::vector<std::string> out = base;
    std::vector<std::string> spare;
    for (std::size_t j = 0; j < 12; ++j) {
      std::string t = "k" + std::to_string(k) + "_duty" + std::to_string(j);
      if (std::find(base.begin(), base.end(), t) == base.end()) spare.push_back(t);
    }
    std::shuffle(spare.begin(), spare.end(), rng);
    for (std::size_t s = 0; s < std::min({swaps, out.size(), spare.size()}); ++s) out[s] = spare[s];
    return out;
  }

  void push(const std::string& id, Vec v, RecordKind kind, std::string title, std::string duties) {
    EmbeddingRecord r;
    r.id = id;
    r.vector = normalized(v);
    r.kind = kind;
    r.meta["title"] = std::move(title);
    r.meta["responsibilities"] = std::move(duties);
    records_.push_back(std::move(r));
  }

  struct QueryDraw {
    std::size_t cluster;
    Vec q;
    std::string title;
    std::vector<std::string> duties;
  };

  QueryDraw draw_query(Fixture& fx, const std::string& id, std::size_t i, Rng& rng) {
    QueryDraw d;
    d.cluster = i % spec_.n_clusters;
    d.q = normalized(add(centers_[d.cluster], gaussian(rng, spec_.query_spread)));
    d.title = cluster_word(d.cluster) + " engineer";
    d.duties = responsibilities_for(d.cluster, rng, 6);
    fx.cluster_of[id] = d.cluster;
    push(id, d.q, RecordKind::Query, d.title, join(d.duties));
    return d;
  }

  Vec positive(const QueryDraw& d, Rng& rng) const { return add(d.q, gaussian(rng, spec_.noise_scale)); }

  Vec role_negative(const Fixture& fx, const QueryDraw& d, Rng& rng) const {
    Vec v = add(d.q, fx.boundary_directions[d.cluster], spec_.boundary_offset_scale);
    return add(v, gaussian(rng, spec_.noise_scale));
  }

  Vec constraint_negative(const Fixture& fx, const QueryDraw& d, Rng& rng) const {
    Vec v = positive(d, rng);
    for (std::size_t i = spec_.dim - fx.constraint_block; i < spec_.dim; ++i) v[i] = -v[i];
    return v;
  }

  std::string positive_title(const QueryDraw& d, Rng& rng) const {
    // One in five positives carries a title variant that only overlaps 2/3
    // and is not a substring, so the boundary-pair title filter rejects it.
    std::uniform_int_distribution<int> u(0, 4);
    return u(rng) == 0 ? cluster_word(d.cluster) + " platform engineer" : d.title;
  }

  std::string positive_duties(const QueryDraw& d, Rng& rng) const {
    std::uniform_int_distribution<std::size_t> swaps(0, 4);
    return join(perturb_duties(d.cluster, d.duties, swaps(rng), rng));
  }

  void make_training_query(Fixture& fx, std::size_t i) {
    Rng rng(static_cast<std::uint64_t>(spec_.seed) * 1000003ULL + 2 * i + 1);
    const std::string qid = "tq" + std::to_string(i);
    const QueryDraw d = draw_query(fx, qid, i, rng);

    for (std::size_t j = 0; j < spec_.train_cards; ++j) {
      const std::string id = qid + "_card" + std::to_string(j);
      push(id, add(d.q, gaussian(rng, 0.5 * spec_.noise_scale)), RecordKind::Candidate, d.title,
           join(d.duties));
      fx.pairs.push_back({qid, id, PairType::CardPos, 0});
    }
    std::vector<std::string> pos, role, cons;
    for (std::size_t j = 0; j < spec_.train_positives; ++j) {
      const std::string id = qid + "_pos" + std::to_string(j);
      push(id, positive(d, rng), RecordKind::Candidate, positive_title(d, rng), positive_duties(d, rng));
      fx.pairs.push_back({qid, id, PairType::SemanticPos, 0});
      pos.push_back(id);
    }
    for (std::size_t j = 0; j < spec_.train_role_negs; ++j) {
      const std::string id = qid + "_role" + std::to_string(j);
      push(id, role_negative(fx, d, rng), RecordKind::Candidate, d.title,
           join(perturb_duties(d.cluster, d.duties, 3, rng)));
      fx.pairs.push_back({qid, id, PairType::RoleNeg, 1});
      role.push_back(id);
    }
    for (std::size_t j = 0; j < spec_.train_cons_negs; ++j) {
      const std::string id = qid + "_cons" + std::to_string(j);
      push(id, constraint_negative(fx, d, rng), RecordKind::Candidate, d.title, join(d.duties));
      fx.pairs.push_back({qid, id, PairType::ConstraintNeg, 0});
      cons.push_back(id);
    }
    for (std::size_t j = 0; j < pos.size(); ++j) {
      const auto& r = role[j % role.size()];
      const auto& c = cons[j % cons.size()];
      fx.groups.push_back({qid, pos[j], r, c});
      fx.triplets.push_back({qid, pos[j], {r, c}});
    }
  }

  void make_eval_query(Fixture& fx, std::size_t i) {
    Rng rng(static_cast<std::uint64_t>(spec_.seed) * 1000003ULL + 2 * i + 2);
    const std::string qid = "q" + std::to_string(i);
    const QueryDraw d = draw_query(fx, qid, i, rng);
    const std::size_t n = spec_.pool_per_query;
    const std::size_t n_pos = std::max<std::size_t>(1, n / 10);
    const std::size_t n_role = n * 3 / 20;
    const std::size_t n_cons = n / 20;
    const std::size_t n_other = n - n_pos - n_role - n_cons;

    PoolJudgment pool{qid, {}, {}};
    QueryJudgment judg{qid, {}};
    for (std::size_t j = 0; j < n_pos; ++j) {
      const std::string id = qid + "_pos" + std::to_string(j);
      push(id, positive(d, rng), RecordKind::Candidate, positive_title(d, rng), positive_duties(d, rng));
      pool.pool.push_back(id);
      judg.positive_ids.insert(id);
      fx.heldout_pairs.push_back({qid, id, PairType::SemanticPos, 0});
    }
    for (std::size_t j = 0; j < n_role; ++j) {
      const std::string id = qid + "_role" + std::to_string(j);
      push(id, role_negative(fx, d, rng), RecordKind::Candidate, d.title,
           join(perturb_duties(d.cluster, d.duties, 3, rng)));
      pool.pool.push_back(id);
      fx.heldout_pairs.push_back({qid, id, PairType::RoleNeg, 1});
    }
    for (std::size_t j = 0; j < n_cons; ++j) {
      const std::string id = qid + "_cons" + std::to_string(j);
      push(id, constraint_negative(fx, d, rng), RecordKind::Candidate, d.title, join(d.duties));
      pool.pool.push_back(id);
    }
    std::uniform_int_distribution<std::size_t> other_cluster(0, spec_.n_clusters - 2);
    for (std::size_t j = 0; j < n_other; ++j) {
      std::size_t k = other_cluster(rng);
      if (k >= d.cluster) ++k;
      const std::string id = qid + "_other" + std::to_string(j);
      push(id, add(centers_[k], gaussian(rng, spec_.query_spread)), RecordKind::Candidate,
           cluster_word(k) + " engineer", join(responsibilities_for(k, rng, 6)));
      pool.pool.push_back(id);
    }
    // Pool order is shuffled so nothing downstream can lean on generation order.
    std::shuffle(pool.pool.begin(), pool.pool.end(), rng);
    pool.positives = judg.positive_ids;
    fx.pools.push_back(std::move(pool));
    fx.judgments.push_back(std::move(judg));
  }

  FixtureSpec spec_;
  std::vector<Vec> centers_;
  std::vector<EmbeddingRecord> records_;
};

}  // namespace detail

/// Deterministic desk-scale testbed; all randomness derives from spec.seed.
inline Fixture generate_fixture(const FixtureSpec& spec) {
  validate(spec);
  return detail::FixtureBuilder(spec).build();
}

inline json to_json(const FixtureSpec& s) {
  return {{"dim", s.dim},
          {"n_queries", s.n_queries},
          {"pool_per_query", s.pool_per_query},
          {"n_clusters", s.n_clusters},
          {"boundary_offset_scale", s.boundary_offset_scale},
          {"noise_scale", s.noise_scale},
          {"seed", s.seed},
          {"train_positives", s.train_positives},
          {"train_role_negs", s.train_role_negs},
          {"train_cons_negs", s.train_cons_negs},
          {"train_cards", s.train_cards},
          {"query_spread", s.query_spread},
          {"boundary_axes", s.boundary_axes}};
}

}  // namespace shortlist
