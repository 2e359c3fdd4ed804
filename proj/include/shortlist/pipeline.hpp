#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "shortlist/adapter.hpp"
#include "shortlist/boundary_head.hpp"
#include "shortlist/config.hpp"
#include "shortlist/corpus.hpp"
#include "shortlist/eval.hpp"
#include "shortlist/ranker.hpp"
#include "shortlist/synthfix.hpp"
#include "shortlist/trainer.hpp"
#include "shortlist/vector_store.hpp"

namespace shortlist {

/// Standard file names inside the output directory.
namespace artifact {
inline constexpr const char* store = "store.jsonl";
inline constexpr const char* pairs = "pairs.jsonl";
inline constexpr const char* groups = "groups.jsonl";
inline constexpr const char* triplets = "triplets.jsonl";
inline constexpr const char* judgments = "judgments.jsonl";
inline constexpr const char* pools = "pools.jsonl";
inline constexpr const char* heldout_pairs = "heldout_pairs.jsonl";
inline constexpr const char* validation_report = "validation_report.json";
inline constexpr const char* adapter_r1 = "adapter_r1.json";
inline constexpr const char* trace_r1 = "trace_r1.jsonl";
inline constexpr const char* store_r1 = "store_r1.jsonl";
inline constexpr const char* adapter_r2 = "adapter_r2.json";
inline constexpr const char* trace_r2 = "trace_r2.jsonl";
inline constexpr const char* store_r2 = "store_r2.jsonl";
inline constexpr const char* boundary_pairs = "boundary_pairs.jsonl";
inline constexpr const char* head = "head.json";
inline constexpr const char* trace_head = "trace_head.jsonl";
inline constexpr const char* lambda = "lambda.json";
inline constexpr const char* rerank = "rerank.jsonl";
inline constexpr const char* report = "report.json";
inline constexpr const char* report_tsv = "report.tsv";
inline constexpr const char* diagnose = "diagnose.json";
}  // namespace artifact

/// CLI exit status for an error.
inline int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::InvalidSpec:
    case ErrorCode::EmptyGrid:
      return 2;
    case ErrorCode::MissingPrerequisite:
      return 3;
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NormCollapse:
    case ErrorCode::ZeroVariance:
      return 5;
    default:
      return 4;
  }
}

inline json error_record(const Error& e) {
  return {{"code", std::string(to_string(e.code()))}, {"message", e.message()}, {"context", e.context()}};
}

/// Resolves inputs and outputs of one command run.
class Workspace {
 public:
  Workspace(RunConfig cfg, std::filesystem::path out)
      : cfg_(std::move(cfg)), out_(std::move(out)), stamp_(stamp_of(cfg_)) {}

  const RunConfig& config() const { return cfg_; }
  const Stamp* stamp() const { return &stamp_; }
  std::filesystem::path out(const char* name) const { return out_ / name; }

  /// Configured path for `key`, else the standard name in the output dir.
  std::filesystem::path input_path(const std::string& key, const char* default_name) const {
    auto it = cfg_.paths.find(key);
    return it != cfg_.paths.end() && !it->second.empty() ? std::filesystem::path(it->second)
                                                         : out_ / default_name;
  }

  std::filesystem::path require(const std::string& key, const char* default_name,
                                const std::string& hint) const {
    return require_file(input_path(key, default_name), hint);
  }

  static std::filesystem::path require_file(const std::filesystem::path& p, const std::string& hint) {
    if (!std::filesystem::exists(p)) {
      throw Error(ErrorCode::MissingPrerequisite, "missing " + p.filename().string() + "; " + hint, p.string());
    }
    return p;
  }

  /// The most adapted store available: R2-merged, else R1-merged, else base.
  std::filesystem::path current_store() const {
    if (std::filesystem::exists(out(artifact::store_r2))) return out(artifact::store_r2);
    if (std::filesystem::exists(out(artifact::store_r1))) return out(artifact::store_r1);
    return require("store", artifact::store, "run fixture or set paths.store");
  }

 private:
  RunConfig cfg_;
  std::filesystem::path out_;
  Stamp stamp_;
};

namespace detail {

template <typename Record>
std::vector<Record> validated(const std::vector<Record>& records, const EmbeddingStore& store) {
  return validate_corpus(records, store).retained;
}

template <typename Record>
std::vector<Record> optional_records(const Workspace& ws, const std::string& key, const char* name,
                                     std::vector<Record> (*load)(const std::filesystem::path&)) {
  const auto p = ws.input_path(key, name);
  return std::filesystem::exists(p) ? load(p) : std::vector<Record>{};
}

template <typename Record>
void split_into(const std::vector<Record>& all, double fraction, std::int64_t seed, std::vector<Record>& train,
                std::vector<Record>& val) {
  if (fraction > 0.0 && all.size() >= 2) {
    auto s = split_corpus(all, fraction, seed);
    train = std::move(s.train);
    val = std::move(s.validation);
  } else {
    train = all;
    val.clear();
  }
}

inline std::vector<PoolJudgment> pools_with_positives(const Workspace& ws) {
  auto pools = load_pools(ws.require("pools", artifact::pools, "run fixture or set paths.pools"));
  const auto judgments = load_judgments(ws.require("judgments", artifact::judgments, "set paths.judgments"));
  std::map<std::string, const QueryJudgment*> by_id;
  for (const auto& j : judgments) by_id[j.query_id] = &j;
  for (auto& p : pools) {
    auto it = by_id.find(p.query_id);
    if (it == by_id.end()) throw Error(ErrorCode::MissingJudgment, "pool query has no judgment", p.query_id);
    p.positives = it->second->positive_ids;
  }
  return pools;
}

}  // namespace detail

inline void cmd_fixture(const Workspace& ws) {
  const Fixture fx = generate_fixture(ws.config().fixture);
  const Stamp* st = ws.stamp();
  save_store(ws.out(artifact::store), fx.store, st);
  save_records(ws.out(artifact::pairs), fx.pairs, st);
  save_records(ws.out(artifact::groups), fx.groups, st);
  save_records(ws.out(artifact::triplets), fx.triplets, st);
  save_judgments(ws.out(artifact::judgments), fx.judgments, st);
  save_pools(ws.out(artifact::pools), fx.pools, st);
  save_records(ws.out(artifact::heldout_pairs), fx.heldout_pairs, st);
}

inline void cmd_validate(const Workspace& ws) {
  const auto store = load_store(ws.require("store", artifact::store, "run fixture or set paths.store"));
  json doc{{"store", {{"dim", store.dim()}, {"records", store.size()}, {"fingerprint", store.fingerprint()}}}};
  doc["pairs"] = to_json(validate_corpus(load_pairs(ws.require("pairs", artifact::pairs, "set paths.pairs")), store));
  const auto groups = detail::optional_records<GroupRecord>(ws, "groups", artifact::groups, load_groups);
  doc["groups"] = to_json(validate_corpus(groups, store));
  const auto triplets = detail::optional_records<TripletRecord>(ws, "triplets", artifact::triplets, load_triplets);
  doc["triplets"] = to_json(validate_corpus(triplets, store));
  apply_stamp(doc, ws.stamp());
  write_json_file(ws.out(artifact::validation_report), doc);
}

inline void cmd_train_r1(const Workspace& ws) {
  const auto& cfg = ws.config();
  const auto store = load_store(ws.require("store", artifact::store, "run fixture or set paths.store"));
  const auto pairs = detail::validated(load_pairs(ws.require("pairs", artifact::pairs, "set paths.pairs")), store);
  const auto groups = detail::validated(
      detail::optional_records<GroupRecord>(ws, "groups", artifact::groups, load_groups), store);
  std::vector<PairRecord> card, semantic;
  for (const auto& p : pairs) {
    if (p.pair_type == PairType::CardPos) card.push_back(p);
    if (p.pair_type == PairType::SemanticPos) semantic.push_back(p);
  }
  Round1Data train, val;
  const double f = cfg.round1.validation_fraction;
  const auto seed = cfg.round1.train.seed;
  detail::split_into(card, f, seed, train.card, val.card);
  detail::split_into(semantic, f, seed, train.semantic, val.semantic);
  detail::split_into(groups, f, seed, train.groups, val.groups);
  if (train.empty()) throw Error(ErrorCode::EmptyCorpus, "no round-1 training records");
  const auto r = train_round1(store, train, val, cfg.round1.train, cfg.round1_weights, cfg.round1.adapter);
  save_adapter(ws.out(artifact::adapter_r1), r.adapter, ws.stamp());
  save_trace(ws.out(artifact::trace_r1), r.trace, ws.stamp());
}

inline void cmd_merge(const Workspace& ws) {
  MergeRound round = ws.config().merge_round;
  if (round == MergeRound::Auto) {
    round = std::filesystem::exists(ws.out(artifact::adapter_r2)) ? MergeRound::R2 : MergeRound::R1;
  }
  const bool r2 = round == MergeRound::R2;
  const auto adapter_path =
      Workspace::require_file(ws.out(r2 ? artifact::adapter_r2 : artifact::adapter_r1),
                              r2 ? "run train-r2 first" : "run train-r1 first");
  const auto base_path = r2 ? Workspace::require_file(ws.out(artifact::store_r1), "merge R1 first")
                            : ws.require("store", artifact::store, "run fixture or set paths.store");
  const auto adapter = load_adapter(adapter_path);
  if (adapter.round_tag != (r2 ? RoundTag::R2 : RoundTag::R1)) {
    throw Error(ErrorCode::MalformedRecord, "adapter round tag does not match merge round", adapter_path.string());
  }
  save_store(ws.out(r2 ? artifact::store_r2 : artifact::store_r1), merge(load_store(base_path), adapter),
             ws.stamp());
}

inline void cmd_train_r2(const Workspace& ws) {
  const auto& cfg = ws.config();
  Workspace::require_file(ws.out(artifact::adapter_r1), "run train-r1 first");
  const auto store = load_store(Workspace::require_file(ws.out(artifact::store_r1), "run merge after train-r1"));
  const auto triplets = detail::validated(
      load_triplets(ws.require("triplets", artifact::triplets, "set paths.triplets")), store);
  if (triplets.empty()) throw Error(ErrorCode::EmptyCorpus, "no valid triplets");
  std::vector<TripletRecord> train, val;
  detail::split_into(triplets, cfg.round2.validation_fraction, cfg.round2.train.seed, train, val);
  const auto r = train_round2(store, train, val, cfg.round2.train, cfg.mnrl, cfg.round2.adapter);
  save_adapter(ws.out(artifact::adapter_r2), r.adapter, ws.stamp());
  save_trace(ws.out(artifact::trace_r2), r.trace, ws.stamp());
}

inline void cmd_train_head(const Workspace& ws) {
  const auto& cfg = ws.config();
  const auto store = load_store(ws.current_store());
  const auto pairs = detail::validated(load_pairs(ws.require("pairs", artifact::pairs, "set paths.pairs")), store);
  std::vector<PairRecord> positives, role_negs;
  for (const auto& p : pairs) {
    if (p.pair_type == PairType::SemanticPos) positives.push_back(p);
    if (p.pair_type == PairType::RoleNeg) role_negs.push_back(p);
  }
  const auto bp = build_boundary_pairs(positives, role_negs, store, cfg.head.pairs);
  const auto r = train_boundary_head(store, bp.pairs, cfg.head.train, cfg.head.head);
  save_records(ws.out(artifact::boundary_pairs), bp.pairs, ws.stamp());
  json doc = to_json(r.head);
  doc["bow_threshold"] = bp.threshold;
  apply_stamp(doc, ws.stamp());
  write_json_file(ws.out(artifact::head), doc);
  save_trace(ws.out(artifact::trace_head), r.trace, ws.stamp());
}

inline void cmd_grid_lambda(const Workspace& ws) {
  const auto& f = ws.config().fusion;
  const auto store = load_store(ws.current_store());
  const auto head = load_head(Workspace::require_file(ws.out(artifact::head), "run train-head first"));
  const auto pools = detail::pools_with_positives(ws);
  const auto search = grid_search_lambda(pools, store, head, f.grid, f.k_metric, f.top_k_stage1);
  json table = json::array();
  for (const auto& [lambda, recall] : search.table) table.push_back({{"lambda", lambda}, {"recall", recall}});
  json doc{{"best_lambda", search.best_lambda}, {"k_metric", f.k_metric}, {"table", table}};
  apply_stamp(doc, ws.stamp());
  write_json_file(ws.out(artifact::lambda), doc);
}

inline void cmd_rerank(const Workspace& ws) {
  const auto& f = ws.config().fusion;
  const auto store = load_store(ws.current_store());
  const auto head = load_head(Workspace::require_file(ws.out(artifact::head), "run train-head first"));
  double lambda = f.lambda;
  if (std::filesystem::exists(ws.out(artifact::lambda))) {
    lambda = read_json_file(ws.out(artifact::lambda)).at("best_lambda").get<double>();
  }
  const auto pools = load_pools(ws.require("pools", artifact::pools, "run fixture or set paths.pools"));
  std::vector<RankedList> lists;
  for (const auto& p : pools) {
    lists.push_back(fuse_rerank(stage1_rank(store, p.query_id, p.pool, f.top_k_stage1), head, store,
                                {lambda, f.top_k_stage1}));
  }
  save_ranked(ws.out(artifact::rerank), lists, ws.stamp());
}

inline void cmd_evaluate(const Workspace& ws) {
  const auto lists = load_ranked(ws.require("ranked", artifact::rerank, "run rerank first"));
  const auto judgments = load_judgments(ws.require("judgments", artifact::judgments, "set paths.judgments"));
  const auto report = macro_report(lists, judgments, ws.config().cutoffs);
  json doc = to_json(report);
  apply_stamp(doc, ws.stamp());
  write_json_file(ws.out(artifact::report), doc);
  auto out = open_output(ws.out(artifact::report_tsv));
  write_report_tsv(out, report, ws.stamp());
}

/// AUC and Cohen's d of head scores, label-1 pairs against label-0 pairs.
inline void cmd_diagnose(const Workspace& ws) {
  const auto store = load_store(ws.current_store());
  const auto head = load_head(Workspace::require_file(ws.out(artifact::head), "run train-head first"));
  const auto pairs = detail::validated(
      load_pairs(ws.require("labeled_pairs", artifact::heldout_pairs, "set paths.labeled_pairs")), store);
  std::vector<double> pos, neg;
  for (const auto& p : pairs) {
    (p.label == 1 ? pos : neg).push_back(boundary_score(head, store.vector(p.query_id), store.vector(p.cand_id)));
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  const double d = cohens_d(pos, neg);
  json doc{{"auc", auc(pos, neg)},
           {"cohens_d", std::isfinite(d) ? json(d) : json(d > 0 ? "inf" : "-inf")},
           {"n_label1", pos.size()},
           {"n_label0", neg.size()},
           {"mean_label1", mean(pos)},
           {"mean_label0", mean(neg)}};
  apply_stamp(doc, ws.stamp());
  write_json_file(ws.out(artifact::diagnose), doc);
}

inline const std::map<std::string, std::function<void(const Workspace&)>>& commands() {
  static const std::map<std::string, std::function<void(const Workspace&)>> table{
      {"fixture", cmd_fixture},       {"validate", cmd_validate},       {"train-r1", cmd_train_r1},
      {"merge", cmd_merge},           {"train-r2", cmd_train_r2},       {"train-head", cmd_train_head},
      {"rerank", cmd_rerank},         {"grid-lambda", cmd_grid_lambda}, {"evaluate", cmd_evaluate},
      {"diagnose", cmd_diagnose}};
  return table;
}

/// Runs one command; errors propagate as shortlist::Error.
inline void run_command(const std::string& name, const RunConfig& cfg, const std::filesystem::path& out_dir) {
  auto it = commands().find(name);
  if (it == commands().end()) throw Error(ErrorCode::ConfigInvalid, "unknown command", name);
  validate(cfg);
  std::filesystem::create_directories(out_dir);
  it->second(Workspace(cfg, out_dir));
}

/// Command order of a full run on a generated fixture.
inline const std::vector<std::string>& full_pipeline() {
  static const std::vector<std::string> steps{"fixture",    "validate",    "train-r1", "merge",
                                              "train-r2",   "merge",       "train-head",
                                              "grid-lambda", "rerank",     "evaluate", "diagnose"};
  return steps;
}

}  // namespace shortlist
