#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "shortlist/boundary_head.hpp"
#include "shortlist/jsonl.hpp"
#include "shortlist/vector_store.hpp"

namespace shortlist {

struct RankedEntry {
  std::string cand_id;
  double s_cos = 0.0;
  std::optional<double> s_boundary;
  double s_final = 0.0;
};

/// Entries sorted by s_final descending, ties by cand_id ascending.
struct RankedList {
  std::string query_id;
  std::vector<RankedEntry> entries;
};

struct FusionConfig {
  double lambda = 0.1;
  std::optional<std::size_t> top_k_stage1;
};

inline bool ranks_before(const RankedEntry& a, const RankedEntry& b) {
  if (a.s_final != b.s_final) return a.s_final > b.s_final;
  return a.cand_id < b.cand_id;
}

/// Pools at or above this size use bounded heap selection instead of a sort.
inline constexpr std::size_t kHeapSelectThreshold = 10000;

/// Keeps the k best entries under ranks_before, in rank order.
inline std::vector<RankedEntry> select_top(std::vector<RankedEntry> entries,
                                           std::optional<std::size_t> k) {
  const std::size_t n = entries.size();
  const std::size_t keep = k ? std::min(*k, n) : n;
  if (n >= kHeapSelectThreshold && keep < n) {
    // Max-heap on "worst first" so the root is the entry to evict.
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::function<bool(std::size_t, std::size_t)>>
        heap([&](std::size_t a, std::size_t b) { return ranks_before(entries[a], entries[b]); });
    for (std::size_t i = 0; i < n; ++i) {
      if (heap.size() < keep) {
        heap.push(i);
      } else if (keep > 0 && ranks_before(entries[i], entries[heap.top()])) {
        heap.pop();
        heap.push(i);
      }
    }
    std::vector<RankedEntry> out;
    out.reserve(keep);
    while (!heap.empty()) {
      out.push_back(std::move(entries[heap.top()]));
      heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }
  std::sort(entries.begin(), entries.end(), ranks_before);
  entries.resize(keep);
  return entries;
}

/// Cosine (dot of unit vectors) ranking of a candidate pool.
inline RankedList stage1_rank(const EmbeddingStore& store, const std::string& query_id,
                              const std::vector<std::string>& pool,
                              std::optional<std::size_t> k = std::nullopt) {
  if (pool.empty()) throw Error(ErrorCode::EmptyPool, "empty candidate pool", query_id);
  const ConstView q = store.vector(query_id);
  std::set<std::string> seen;
  std::vector<RankedEntry> entries;
  entries.reserve(pool.size());
  for (const auto& id : pool) {
    if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateId, "candidate repeated in pool", id);
    const double s = dot(q, store.vector(id));
    entries.push_back({id, s, std::nullopt, s});
  }
  return {query_id, select_top(std::move(entries), k)};
}

/// s_final = s_cos - lambda * s_boundary given precomputed boundary scores
/// aligned with stage1.entries.
inline RankedList fuse_with_scores(const RankedList& stage1, const std::vector<double>& boundary,
                                   double lambda) {
  if (lambda < 0.0) throw Error(ErrorCode::ConfigInvalid, "lambda must be >= 0");
  require_same_dim(boundary.size(), stage1.entries.size(), "boundary scores");
  RankedList out{stage1.query_id, stage1.entries};
  for (std::size_t i = 0; i < out.entries.size(); ++i) {
    out.entries[i].s_boundary = boundary[i];
    out.entries[i].s_final = out.entries[i].s_cos - lambda * boundary[i];
  }
  std::sort(out.entries.begin(), out.entries.end(), ranks_before);
  return out;
}

inline std::vector<double> boundary_scores(const RankedList& list, const BoundaryHeadParams& head,
                                           const EmbeddingStore& store) {
  const ConstView q = store.vector(list.query_id);
  std::vector<double> out;
  out.reserve(list.entries.size());
  for (const auto& e : list.entries) out.push_back(boundary_score(head, q, store.vector(e.cand_id)));
  return out;
}

inline RankedList fuse_rerank(const RankedList& stage1, const BoundaryHeadParams& head,
                              const EmbeddingStore& store, const FusionConfig& cfg) {
  return fuse_with_scores(stage1, boundary_scores(stage1, head, store), cfg.lambda);
}

inline const std::vector<double>& default_lambda_grid() {
  static const std::vector<double> grid{0.0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3};
  return grid;
}

struct LambdaSearch {
  double best_lambda = 0.0;
  std::vector<std::pair<double, double>> table;  // (lambda, macro recall@k)
};

/// Per-query pool and positive set used by grid search.
struct PoolJudgment {
  std::string query_id;
  std::vector<std::string> pool;
  std::set<std::string> positives;
};

/// Macro Recall@k for every lambda on the grid; the best lambda wins and
/// ties go to the smaller lambda.
inline LambdaSearch grid_search_lambda(const std::vector<PoolJudgment>& val_queries,
                                       const EmbeddingStore& store, const BoundaryHeadParams& head,
                                       const std::vector<double>& grid, std::size_t k_metric,
                                       std::optional<std::size_t> top_k_stage1 = std::nullopt) {
  if (grid.empty()) throw Error(ErrorCode::EmptyGrid, "lambda grid is empty");
  if (k_metric < 1) throw Error(ErrorCode::ConfigInvalid, "k_metric must be >= 1");
  std::vector<RankedList> stage1;
  std::vector<std::vector<double>> scores;
  std::vector<const PoolJudgment*> used;
  for (const auto& q : val_queries) {
    if (q.positives.empty()) continue;
    stage1.push_back(stage1_rank(store, q.query_id, q.pool, top_k_stage1));
    scores.push_back(boundary_scores(stage1.back(), head, store));
    used.push_back(&q);
  }
  if (used.empty()) throw Error(ErrorCode::EmptyPositives, "no validation query has positives");

  std::vector<double> sorted_grid = grid;
  std::sort(sorted_grid.begin(), sorted_grid.end());
  LambdaSearch out;
  double best_recall = -1.0;
  for (double lambda : sorted_grid) {
    double sum = 0.0;
    for (std::size_t i = 0; i < used.size(); ++i) {
      const RankedList fused = fuse_with_scores(stage1[i], scores[i], lambda);
      std::size_t hits = 0;
      for (std::size_t r = 0; r < std::min(k_metric, fused.entries.size()); ++r) {
        hits += used[i]->positives.count(fused.entries[r].cand_id);
      }
      sum += static_cast<double>(hits) / static_cast<double>(used[i]->positives.size());
    }
    const double recall = sum / static_cast<double>(used.size());
    out.table.emplace_back(lambda, recall);
    if (recall > best_recall) {
      best_recall = recall;
      out.best_lambda = lambda;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files

inline std::vector<PoolJudgment> load_pools(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<PoolJudgment> out;
  for_each_json_line(in, path.string(), [&](const json& o, std::size_t) {
    out.push_back({o.at("query_id").get<std::string>(), o.at("cand_ids").get<std::vector<std::string>>(), {}});
  });
  return out;
}

inline void save_pools(const std::filesystem::path& path, const std::vector<PoolJudgment>& pools,
                       const Stamp* stamp = nullptr) {
  auto out = open_output(path);
  write_stamp_comment(out, stamp);
  for (const auto& p : pools) out << json{{"query_id", p.query_id}, {"cand_ids", p.pool}}.dump() << "\n";
}

inline void write_ranked(std::ostream& out, const std::vector<RankedList>& lists) {
  for (const auto& l : lists) {
    for (std::size_t r = 0; r < l.entries.size(); ++r) {
      const auto& e = l.entries[r];
      json o{{"query_id", l.query_id},
             {"rank", r + 1},
             {"cand_id", e.cand_id},
             {"s_cos", e.s_cos},
             {"s_boundary", e.s_boundary ? json(*e.s_boundary) : json(nullptr)},
             {"s_final", e.s_final}};
      out << o.dump() << "\n";
    }
  }
}

inline void save_ranked(const std::filesystem::path& path, const std::vector<RankedList>& lists,
                        const Stamp* stamp = nullptr) {
  auto out = open_output(path);
  write_stamp_comment(out, stamp);
  write_ranked(out, lists);
}

/// Reads a rerank file back into lists, ordered by `rank` within each query
/// and by first appearance across queries.
inline std::vector<RankedList> load_ranked(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<RankedList> lists;
  std::map<std::string, std::size_t> where;
  std::vector<std::vector<std::pair<std::size_t, RankedEntry>>> rows;
  for_each_json_line(in, path.string(), [&](const json& o, std::size_t) {
    const auto qid = o.at("query_id").get<std::string>();
    auto [it, inserted] = where.emplace(qid, lists.size());
    if (inserted) {
      lists.push_back({qid, {}});
      rows.emplace_back();
    }
    RankedEntry e;
    e.cand_id = o.at("cand_id").get<std::string>();
    e.s_cos = o.value("s_cos", 0.0);
    if (o.contains("s_boundary") && !o.at("s_boundary").is_null()) e.s_boundary = o.at("s_boundary").get<double>();
    e.s_final = o.value("s_final", e.s_cos);
    rows[it->second].emplace_back(o.at("rank").get<std::size_t>(), std::move(e));
  });
  for (std::size_t i = 0; i < lists.size(); ++i) {
    std::stable_sort(rows[i].begin(), rows[i].end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [rank, e] : rows[i]) lists[i].entries.push_back(std::move(e));
  }
  return lists;
}

}  // namespace shortlist
