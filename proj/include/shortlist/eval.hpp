#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "shortlist/jsonl.hpp"
#include "shortlist/ranker.hpp"

namespace shortlist {

struct QueryJudgment {
  std::string query_id;
  std::set<std::string> positive_ids;
};

inline std::size_t hits_at_k(const RankedList& ranked, const QueryJudgment& judg, std::size_t k) {
  std::size_t hits = 0;
  const std::size_t n = std::min(k, ranked.entries.size());
  for (std::size_t i = 0; i < n; ++i) hits += judg.positive_ids.count(ranked.entries[i].cand_id);
  return hits;
}

/// |top-k ∩ P| / |P|; a list shorter than k contributes all its entries.
inline double recall_at_k(const RankedList& ranked, const QueryJudgment& judg, std::size_t k) {
  if (k < 1) throw Error(ErrorCode::ConfigInvalid, "k must be >= 1");
  if (judg.positive_ids.empty()) throw Error(ErrorCode::EmptyPositives, "no positives", judg.query_id);
  return static_cast<double>(hits_at_k(ranked, judg, k)) /
         static_cast<double>(judg.positive_ids.size());
}

/// |top-k ∩ P| / k; the denominator stays k when the list is shorter.
inline double precision_at_k(const RankedList& ranked, const QueryJudgment& judg, std::size_t k) {
  if (k < 1) throw Error(ErrorCode::ConfigInvalid, "k must be >= 1");
  return static_cast<double>(hits_at_k(ranked, judg, k)) / static_cast<double>(k);
}

inline const std::vector<std::size_t>& default_cutoffs() {
  static const std::vector<std::size_t> cutoffs{10, 20, 30, 40, 50, 60, 70};
  return cutoffs;
}

struct QueryMetrics {
  std::string query_id;
  std::vector<double> recall;
  std::vector<double> precision;
};

struct EvalReport {
  std::vector<std::size_t> cutoffs;
  std::vector<QueryMetrics> per_query;  // only queries with positives
  std::vector<std::string> excluded;    // ranked queries whose positive set is empty
  std::vector<double> macro_recall;
  std::vector<double> macro_precision;

  std::size_t query_count() const { return per_query.size(); }
};

/// Per-query metrics at each cutoff and their unweighted means. Queries
/// whose positive set is empty are listed in `excluded` and left out of the
/// means.
inline EvalReport macro_report(const std::vector<RankedList>& rankeds,
                               const std::vector<QueryJudgment>& judgments,
                               const std::vector<std::size_t>& cutoffs = default_cutoffs()) {
  std::map<std::string, const QueryJudgment*> by_id;
  for (const auto& j : judgments) by_id[j.query_id] = &j;
  EvalReport report;
  report.cutoffs = cutoffs;
  report.macro_recall.assign(cutoffs.size(), 0.0);
  report.macro_precision.assign(cutoffs.size(), 0.0);
  for (const auto& r : rankeds) {
    auto it = by_id.find(r.query_id);
    if (it == by_id.end()) throw Error(ErrorCode::MissingJudgment, "ranked query has no judgment", r.query_id);
    if (it->second->positive_ids.empty()) {
      report.excluded.push_back(r.query_id);
      continue;
    }
    QueryMetrics m{r.query_id, {}, {}};
    for (std::size_t k : cutoffs) {
      m.recall.push_back(recall_at_k(r, *it->second, k));
      m.precision.push_back(precision_at_k(r, *it->second, k));
    }
    report.per_query.push_back(std::move(m));
  }
  if (!report.per_query.empty()) {
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
      double rs = 0.0, ps = 0.0;
      for (const auto& m : report.per_query) {
        rs += m.recall[c];
        ps += m.precision[c];
      }
      report.macro_recall[c] = rs / static_cast<double>(report.per_query.size());
      report.macro_precision[c] = ps / static_cast<double>(report.per_query.size());
    }
  }
  return report;
}

/// Mann-Whitney U / (n_pos * n_neg), ties counted as one half.
inline double auc(const std::vector<double>& scores_pos, const std::vector<double>& scores_neg) {
  if (scores_pos.empty() || scores_neg.empty()) throw Error(ErrorCode::EmptyGroup, "auc needs two non-empty groups");
  std::vector<std::pair<double, int>> all;
  for (double s : scores_pos) all.emplace_back(s, 1);
  for (double s : scores_neg) all.emplace_back(s, 0);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Sum of midranks of the positive group.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].second == 1) rank_sum += midrank;
    }
    i = j;
  }
  const double np = static_cast<double>(scores_pos.size());
  const double nn = static_cast<double>(scores_neg.size());
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

/// (mean(a) - mean(b)) / pooled standard deviation with (n - 1) weighting.
inline double cohens_d(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::EmptyGroup, "cohen's d needs >= 2 values per group");
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto ss = [](const std::vector<double>& v, double m) {
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s;
  };
  const double ma = mean(a);
  const double mb = mean(b);
  const double pooled_var =
      (ss(a, ma) + ss(b, mb)) / static_cast<double>(a.size() + b.size() - 2);
  const double diff = ma - mb;
  if (pooled_var == 0.0) {
    if (diff == 0.0) throw Error(ErrorCode::ZeroVariance, "both groups constant and equal");
    return diff > 0.0 ? INFINITY : -INFINITY;
  }
  return diff / std::sqrt(pooled_var);
}

// ---------------------------------------------------------------------------
// Files

inline std::vector<QueryJudgment> load_judgments(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<QueryJudgment> out;
  for_each_json_line(in, path.string(), [&](const json& o, std::size_t) {
    const auto ids = o.at("positive_ids").get<std::vector<std::string>>();
    out.push_back({o.at("query_id").get<std::string>(), {ids.begin(), ids.end()}});
  });
  return out;
}

inline void save_judgments(const std::filesystem::path& path, const std::vector<QueryJudgment>& js,
                           const Stamp* stamp = nullptr) {
  auto out = open_output(path);
  write_stamp_comment(out, stamp);
  for (const auto& j : js) {
    out << json{{"query_id", j.query_id},
                {"positive_ids", std::vector<std::string>(j.positive_ids.begin(), j.positive_ids.end())}}
               .dump()
        << "\n";
  }
}

inline json to_json(const EvalReport& r) {
  json per_query = json::array();
  for (const auto& m : r.per_query) {
    per_query.push_back({{"query_id", m.query_id}, {"recall", m.recall}, {"precision", m.precision}});
  }
  return {{"cutoffs", r.cutoffs},
          {"macro_recall", r.macro_recall},
          {"macro_precision", r.macro_precision},
          {"per_query", per_query},
          {"query_count", r.query_count()},
          {"excluded_empty_positives", r.excluded}};
}

/// Plot-ready table: one row per cutoff.
inline void write_report_tsv(std::ostream& out, const EvalReport& r, const Stamp* stamp = nullptr) {
  write_stamp_comment(out, stamp);
  out << "K\trecall\tprecision\n";
  for (std::size_t c = 0; c < r.cutoffs.size(); ++c) {
    out << r.cutoffs[c] << '\t' << json(r.macro_recall[c]).dump() << '\t'
        << json(r.macro_precision[c]).dump() << "\n";
  }
}

}  // namespace shortlist
