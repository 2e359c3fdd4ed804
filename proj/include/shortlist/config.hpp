#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shortlist/boundary_head.hpp"
#include "shortlist/corpus.hpp"
#include "shortlist/eval.hpp"
#include "shortlist/jsonl.hpp"
#include "shortlist/losses.hpp"
#include "shortlist/ranker.hpp"
#include "shortlist/synthfix.hpp"
#include "shortlist/train_types.hpp"
#include "shortlist/trainer.hpp"

namespace shortlist {

/// Which adapter `merge` applies. Auto picks R2 when its checkpoint exists.
enum class MergeRound { Auto, R1, R2 };

struct AdapterPhaseConfig {
  TrainConfig train;
  AdapterOptions adapter;
  double validation_fraction = 0.0;
};

struct HeadPhaseConfig {
  TrainConfig train = head_train_defaults();
  HeadOptions head;
  BoundaryPairOptions pairs;
};

struct FusionPhaseConfig {
  double lambda = 0.1;
  std::vector<double> grid = default_lambda_grid();
  std::size_t k_metric = 50;
  std::optional<std::size_t> top_k_stage1;
};

/// Everything a command needs. Input paths left empty resolve to the
/// standard artifact name inside the output directory.
struct RunConfig {
  std::int64_t seed = 7;
  std::map<std::string, std::string> paths;
  FixtureSpec fixture;
  AdapterPhaseConfig round1;
  Round1Weights round1_weights;
  MnrlConfig mnrl;
  AdapterPhaseConfig round2;
  HeadPhaseConfig head;
  FusionPhaseConfig fusion;
  std::vector<std::size_t> cutoffs = default_cutoffs();
  MergeRound merge_round = MergeRound::Auto;

  RunConfig() {
    round1.adapter = {16, 32.0};
    round2.adapter = {8, 32.0};
    round2.validation_fraction = 0.1;
    fixture.seed = round1.train.seed = round2.train.seed = head.train.seed = seed;
  }
};

/// Keys accepted in the "paths" section.
inline const std::vector<std::string>& path_keys() {
  static const std::vector<std::string> keys{"store", "pairs",         "groups", "triplets", "judgments",
                                             "pools", "labeled_pairs", "ranked"};
  return keys;
}

namespace detail {

inline void config_error(const std::string& msg, const std::string& where) {
  throw Error(ErrorCode::ConfigInvalid, msg, where);
}

/// Rejects keys the section does not define so typos never pass silently.
inline void check_keys(const json& section, const std::vector<std::string>& allowed,
                       const std::string& where) {
  if (!section.is_object()) config_error("section must be an object", where);
  for (const auto& [k, v] : section.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      config_error("unknown key '" + k + "'", where);
    }
  }
}

template <typename T>
void read_key(const json& section, const char* key, T& dst, const std::string& where) {
  if (!section.contains(key)) return;
  try {
    dst = section.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(std::string("bad value for '") + key + "'", where);
  }
}

inline void read_train(const json& s, TrainConfig& t, const std::string& where) {
  read_key(s, "lr", t.lr, where);
  read_key(s, "max_epochs", t.max_epochs, where);
  read_key(s, "batch_size", t.batch_size, where);
  read_key(s, "early_stop_patience", t.early_stop_patience, where);
  read_key(s, "weight_decay", t.weight_decay, where);
}

inline json train_json(const TrainConfig& t) {
  return {{"lr", t.lr},
          {"max_epochs", t.max_epochs},
          {"batch_size", t.batch_size},
          {"early_stop_patience", t.early_stop_patience},
          {"weight_decay", t.weight_decay}};
}

inline void read_fixture(const json& s, FixtureSpec& f) {
  const std::string w = "fixture";
  check_keys(s, {"dim", "n_queries", "pool_per_query", "n_clusters", "boundary_offset_scale",
                 "noise_scale", "train_positives", "train_role_negs", "train_cons_negs",
                 "train_cards", "query_spread", "boundary_axes"},
             w);
  read_key(s, "dim", f.dim, w);
  read_key(s, "n_queries", f.n_queries, w);
  read_key(s, "pool_per_query", f.pool_per_query, w);
  read_key(s, "n_clusters", f.n_clusters, w);
  read_key(s, "boundary_offset_scale", f.boundary_offset_scale, w);
  read_key(s, "noise_scale", f.noise_scale, w);
  read_key(s, "train_positives", f.train_positives, w);
  read_key(s, "train_role_negs", f.train_role_negs, w);
  read_key(s, "train_cons_negs", f.train_cons_negs, w);
  read_key(s, "train_cards", f.train_cards, w);
  read_key(s, "query_spread", f.query_spread, w);
  read_key(s, "boundary_axes", f.boundary_axes, w);
}

inline json fixture_json(const FixtureSpec& f) {
  json j = to_json(f);
  j.erase("seed");
  return j;
}

}  // namespace detail

inline std::string_view to_string(MergeRound m) {
  switch (m) {
    case MergeRound::Auto: return "auto";
    case MergeRound::R1: return "R1";
    case MergeRound::R2: return "R2";
  }
  return "auto";
}

/// Fully expanded config, used both for hashing and for echoing back.
inline json to_json(const RunConfig& c) {
  json paths = json::object();
  for (const auto& [k, v] : c.paths) paths[k] = v;
  json r1 = detail::train_json(c.round1.train);
  r1["stage_epochs"] = c.round1.train.stage_epochs;
  r1["rank"] = c.round1.adapter.rank;
  r1["alpha"] = c.round1.adapter.alpha;
  r1["validation_fraction"] = c.round1.validation_fraction;
  json r2 = detail::train_json(c.round2.train);
  r2["rank"] = c.round2.adapter.rank;
  r2["alpha"] = c.round2.adapter.alpha;
  r2["validation_fraction"] = c.round2.validation_fraction;
  json head = detail::train_json(c.head.train);
  head["hidden"] = c.head.head.hidden;
  head["dropout"] = c.head.head.dropout_p;
  head["validation_fraction"] = c.head.head.validation_fraction;
  head["bow_start"] = c.head.pairs.bow_start;
  head["bow_floor"] = c.head.pairs.bow_floor;
  head["bow_step"] = c.head.pairs.bow_step;
  json fusion{{"lambda", c.fusion.lambda},
              {"grid", c.fusion.grid},
              {"k_metric", c.fusion.k_metric},
              {"top_k_stage1", c.fusion.top_k_stage1 ? json(*c.fusion.top_k_stage1) : json(nullptr)}};
  const auto& w = c.round1_weights;
  return {{"seed", c.seed},
          {"paths", paths},
          {"fixture", detail::fixture_json(c.fixture)},
          {"round1", r1},
          {"round1_weights",
           {{"w_p", w.w_p}, {"w_r", w.w_r}, {"w_k", w.w_k}, {"w_d", w.w_d}, {"m_r", w.m_r}, {"m_k", w.m_k}}},
          {"mnrl", {{"temperature", c.mnrl.temperature}}},
          {"round2", r2},
          {"head", head},
          {"fusion", fusion},
          {"eval", {{"cutoffs", c.cutoffs}}},
          {"merge", {{"round", std::string(to_string(c.merge_round))}}}};
}

/// Sets every per-phase seed from the global one.
inline void apply_seed(RunConfig& c, std::int64_t seed) {
  c.seed = seed;
  c.fixture.seed = seed;
  c.round1.train.seed = seed;
  c.round2.train.seed = seed;
  c.head.train.seed = seed;
}

inline void validate(const RunConfig& c) {
  auto check = [](auto fn, const char* where) {
    try {
      fn();
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigInvalid, e.message(), where);
    }
  };
  check([&] { validate(c.fixture); }, "fixture");
  check([&] { validate(c.round1.train); }, "round1");
  check([&] { validate(c.round2.train); }, "round2");
  check([&] { validate(c.head.train); }, "head");
  auto frac = [](double f, const char* where) {
    if (!(f >= 0.0 && f < 1.0)) detail::config_error("validation_fraction must be in [0, 1)", where);
  };
  frac(c.round1.validation_fraction, "round1");
  frac(c.round2.validation_fraction, "round2");
  frac(c.head.head.validation_fraction, "head");
  for (const auto* a : {&c.round1.adapter, &c.round2.adapter}) {
    if (a->rank < 1) detail::config_error("rank must be >= 1", "adapter");
    if (!(a->alpha > 0.0)) detail::config_error("alpha must be > 0", "adapter");
  }
  if (c.head.head.hidden < 1) detail::config_error("hidden must be >= 1", "head");
  if (!(c.head.head.dropout_p >= 0.0 && c.head.head.dropout_p < 1.0)) {
    detail::config_error("dropout must be in [0, 1)", "head");
  }
  if (!(c.mnrl.temperature > 0.0)) detail::config_error("temperature must be > 0", "mnrl");
  if (c.fusion.lambda < 0.0) detail::config_error("lambda must be >= 0", "fusion");
  if (c.fusion.grid.empty()) detail::config_error("grid must not be empty", "fusion");
  for (double l : c.fusion.grid) {
    if (l < 0.0) detail::config_error("grid values must be >= 0", "fusion");
  }
  if (c.fusion.k_metric < 1) detail::config_error("k_metric must be >= 1", "fusion");
  if (c.fusion.top_k_stage1 && *c.fusion.top_k_stage1 < 1) {
    detail::config_error("top_k_stage1 must be >= 1", "fusion");
  }
  if (c.cutoffs.empty()) detail::config_error("cutoffs must not be empty", "eval");
  for (auto k : c.cutoffs) {
    if (k < 1) detail::config_error("cutoffs must be >= 1", "eval");
  }
}

/// Missing sections and keys keep their defaults.
inline RunConfig config_from_json(const json& doc) {
  using detail::read_key;
  RunConfig c;
  detail::check_keys(doc, {"seed", "paths", "fixture", "round1", "round1_weights", "mnrl", "round2",
                           "head", "fusion", "eval", "merge"},
                     "config");
  std::int64_t seed = c.seed;
  read_key(doc, "seed", seed, "config");

  if (doc.contains("paths")) {
    const auto& p = doc.at("paths");
    detail::check_keys(p, path_keys(), "paths");
    for (const auto& [k, v] : p.items()) {
      if (!v.is_string()) detail::config_error("path must be a string", "paths." + k);
      c.paths[k] = v.get<std::string>();
    }
  }
  if (doc.contains("fixture")) detail::read_fixture(doc.at("fixture"), c.fixture);
  if (doc.contains("round1")) {
    const auto& s = doc.at("round1");
    detail::check_keys(s, {"lr", "max_epochs", "batch_size", "early_stop_patience", "weight_decay",
                           "stage_epochs", "rank", "alpha", "validation_fraction"},
                       "round1");
    detail::read_train(s, c.round1.train, "round1");
    read_key(s, "stage_epochs", c.round1.train.stage_epochs, "round1");
    read_key(s, "rank", c.round1.adapter.rank, "round1");
    read_key(s, "alpha", c.round1.adapter.alpha, "round1");
    read_key(s, "validation_fraction", c.round1.validation_fraction, "round1");
  }
  if (doc.contains("round1_weights")) {
    const auto& s = doc.at("round1_weights");
    detail::check_keys(s, {"w_p", "w_r", "w_k", "w_d", "m_r", "m_k"}, "round1_weights");
    auto& w = c.round1_weights;
    read_key(s, "w_p", w.w_p, "round1_weights");
    read_key(s, "w_r", w.w_r, "round1_weights");
    read_key(s, "w_k", w.w_k, "round1_weights");
    read_key(s, "w_d", w.w_d, "round1_weights");
    read_key(s, "m_r", w.m_r, "round1_weights");
    read_key(s, "m_k", w.m_k, "round1_weights");
  }
  if (doc.contains("mnrl")) {
    detail::check_keys(doc.at("mnrl"), {"temperature"}, "mnrl");
    read_key(doc.at("mnrl"), "temperature", c.mnrl.temperature, "mnrl");
  }
  if (doc.contains("round2")) {
    const auto& s = doc.at("round2");
    detail::check_keys(s, {"lr", "max_epochs", "batch_size", "early_stop_patience", "weight_decay", "rank",
                           "alpha", "validation_fraction"},
                       "round2");
    detail::read_train(s, c.round2.train, "round2");
    read_key(s, "rank", c.round2.adapter.rank, "round2");
    read_key(s, "alpha", c.round2.adapter.alpha, "round2");
    read_key(s, "validation_fraction", c.round2.validation_fraction, "round2");
  }
  if (doc.contains("head")) {
    const auto& s = doc.at("head");
    detail::check_keys(s, {"lr", "max_epochs", "batch_size", "early_stop_patience", "weight_decay", "hidden",
                           "dropout", "validation_fraction", "bow_start", "bow_floor", "bow_step"},
                       "head");
    detail::read_train(s, c.head.train, "head");
    read_key(s, "hidden", c.head.head.hidden, "head");
    read_key(s, "dropout", c.head.head.dropout_p, "head");
    read_key(s, "validation_fraction", c.head.head.validation_fraction, "head");
    read_key(s, "bow_start", c.head.pairs.bow_start, "head");
    read_key(s, "bow_floor", c.head.pairs.bow_floor, "head");
    read_key(s, "bow_step", c.head.pairs.bow_step, "head");
  }
  if (doc.contains("fusion")) {
    const auto& s = doc.at("fusion");
    detail::check_keys(s, {"lambda", "grid", "k_metric", "top_k_stage1"}, "fusion");
    read_key(s, "lambda", c.fusion.lambda, "fusion");
    read_key(s, "grid", c.fusion.grid, "fusion");
    read_key(s, "k_metric", c.fusion.k_metric, "fusion");
    if (s.contains("top_k_stage1") && !s.at("top_k_stage1").is_null()) {
      std::size_t k = 0;
      read_key(s, "top_k_stage1", k, "fusion");
      c.fusion.top_k_stage1 = k;
    }
  }
  if (doc.contains("eval")) {
    detail::check_keys(doc.at("eval"), {"cutoffs"}, "eval");
    read_key(doc.at("eval"), "cutoffs", c.cutoffs, "eval");
  }
  if (doc.contains("merge")) {
    detail::check_keys(doc.at("merge"), {"round"}, "merge");
    std::string r = "auto";
    read_key(doc.at("merge"), "round", r, "merge");
    if (r == "auto") c.merge_round = MergeRound::Auto;
    else if (r == "R1") c.merge_round = MergeRound::R1;
    else if (r == "R2") c.merge_round = MergeRound::R2;
    else detail::config_error("round must be auto, R1 or R2", "merge");
  }
  apply_seed(c, seed);
  validate(c);
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::ConfigInvalid, "config file not found", path.string());
  }
  std::ifstream in(path);
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what(), path.string());
  }
}

inline std::string config_hash(const RunConfig& c) { return fnv1a_hex(to_json(c).dump()); }

inline Stamp stamp_of(const RunConfig& c) { return {config_hash(c), c.seed}; }

}  // namespace shortlist
