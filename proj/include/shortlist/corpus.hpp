#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "shortlist/jsonl.hpp"
#include "shortlist/vector_store.hpp"

namespace shortlist {

/// Supervision stage a pair came from.
enum class PairType { CardPos, SemanticPos, RoleNeg, ConstraintNeg };

inline std::string_view to_string(PairType t) {
  switch (t) {
    case PairType::CardPos: return "card_pos";
    case PairType::SemanticPos: return "semantic_pos";
    case PairType::RoleNeg: return "role_neg";
    case PairType::ConstraintNeg: return "constraint_neg";
  }
  return "";
}

inline PairType parse_pair_type(const std::string& s) {
  if (s == "card_pos") return PairType::CardPos;
  if (s == "semantic_pos") return PairType::SemanticPos;
  if (s == "role_neg") return PairType::RoleNeg;
  if (s == "constraint_neg") return PairType::ConstraintNeg;
  throw Error(ErrorCode::MalformedRecord, "unknown pair_type `" + s + "`");
}

struct PairRecord {
  std::string query_id;
  std::string cand_id;
  PairType pair_type = PairType::SemanticPos;
  int label = 0;  // 1 = boundary mismatch; read only by head training

  std::vector<std::string> ids() const { return {query_id, cand_id}; }
  auto key() const { return std::make_tuple(query_id, cand_id, pair_type); }
  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

struct TripletRecord {
  std::string query_id;
  std::string pos_id;
  std::vector<std::string> neg_ids;

  std::vector<std::string> ids() const {
    std::vector<std::string> out{query_id, pos_id};
    out.insert(out.end(), neg_ids.begin(), neg_ids.end());
    return out;
  }
  auto key() const { return std::make_tuple(query_id, pos_id, neg_ids); }
  friend bool operator==(const TripletRecord&, const TripletRecord&) = default;
};

struct GroupRecord {
  std::string query_id;
  std::string pos_id;
  std::string role_neg_id;
  std::string cons_neg_id;

  std::vector<std::string> ids() const { return {query_id, pos_id, role_neg_id, cons_neg_id}; }
  auto key() const { return std::make_tuple(query_id, pos_id, role_neg_id, cons_neg_id); }
  friend bool operator==(const GroupRecord&, const GroupRecord&) = default;
};

// ---------------------------------------------------------------------------
// JSON mapping

inline PairRecord pair_from_json(const json& o) {
  PairRecord r;
  r.query_id = o.at("query_id").get<std::string>();
  r.cand_id = o.at("cand_id").get<std::string>();
  r.pair_type = parse_pair_type(o.at("pair_type").get<std::string>());
  r.label = o.contains("label") ? o.at("label").get<int>() : (r.pair_type == PairType::RoleNeg ? 1 : 0);
  if (r.label != 0 && r.label != 1) throw Error(ErrorCode::MalformedRecord, "label must be 0 or 1");
  return r;
}

inline json to_json(const PairRecord& r) {
  return {{"query_id", r.query_id},
          {"cand_id", r.cand_id},
          {"pair_type", std::string(to_string(r.pair_type))},
          {"label", r.label}};
}

inline TripletRecord triplet_from_json(const json& o) {
  TripletRecord r;
  r.query_id = o.at("query_id").get<std::string>();
  r.pos_id = o.at("pos_id").get<std::string>();
  r.neg_ids = o.at("neg_ids").get<std::vector<std::string>>();
  if (r.neg_ids.empty()) throw Error(ErrorCode::MalformedRecord, "neg_ids must be non-empty");
  return r;
}

inline json to_json(const TripletRecord& r) {
  return {{"query_id", r.query_id}, {"pos_id", r.pos_id}, {"neg_ids", r.neg_ids}};
}

inline GroupRecord group_from_json(const json& o) {
  return {o.at("query_id").get<std::string>(), o.at("pos_id").get<std::string>(),
          o.at("role_neg_id").get<std::string>(), o.at("cons_neg_id").get<std::string>()};
}

inline json to_json(const GroupRecord& r) {
  return {{"query_id", r.query_id},
          {"pos_id", r.pos_id},
          {"role_neg_id", r.role_neg_id},
          {"cons_neg_id", r.cons_neg_id}};
}

template <typename Record, typename Parse>
std::vector<Record> read_records(const std::filesystem::path& path, Parse parse) {
  auto in = open_input(path);
  std::vector<Record> out;
  for_each_json_line(in, path.string(), [&](const json& o, std::size_t line) {
    try {
      out.push_back(parse(o));
    } catch (const Error& e) {
      throw Error(e.code(), e.message(), path.string() + ":" + std::to_string(line));
    }
  });
  return out;
}

inline std::vector<PairRecord> load_pairs(const std::filesystem::path& p) {
  return read_records<PairRecord>(p, pair_from_json);
}
inline std::vector<TripletRecord> load_triplets(const std::filesystem::path& p) {
  return read_records<TripletRecord>(p, triplet_from_json);
}
inline std::vector<GroupRecord> load_groups(const std::filesystem::path& p) {
  return read_records<GroupRecord>(p, group_from_json);
}

template <typename Record>
void save_records(const std::filesystem::path& path, const std::vector<Record>& records,
                  const Stamp* stamp = nullptr) {
  auto out = open_output(path);
  write_stamp_comment(out, stamp);
  for (const auto& r : records) out << to_json(r).dump() << "\n";
}

// ---------------------------------------------------------------------------
// Validation

struct ValidationFailure {
  std::size_t index;
  std::string reason;  // unknown_id | self_pair | duplicate
  std::string detail;
};

template <typename Record>
struct ValidationReport {
  std::vector<Record> retained;
  std::vector<ValidationFailure> failures;
  std::size_t input_count = 0;
};

/// Drops records with unknown ids, repeated ids inside a record, or an exact
/// duplicate of an earlier record. Order of the survivors is preserved.
template <typename Record>
ValidationReport<Record> validate_corpus(const std::vector<Record>& records,
                                         const EmbeddingStore& store) {
  ValidationReport<Record> report;
  report.input_count = records.size();
  std::set<decltype(records.front().key())> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Record& r = records[i];
    const auto ids = r.ids();
    auto unknown = std::find_if(ids.begin(), ids.end(),
                                [&](const std::string& id) { return !store.contains(id); });
    if (unknown != ids.end()) {
      report.failures.push_back({i, "unknown_id", *unknown});
      continue;
    }
    std::set<std::string> distinct(ids.begin(), ids.end());
    if (distinct.size() != ids.size()) {
      report.failures.push_back({i, "self_pair", r.ids().front()});
      continue;
    }
    if (!seen.insert(r.key()).second) {
      report.failures.push_back({i, "duplicate", r.ids().front()});
      continue;
    }
    report.retained.push_back(r);
  }
  return report;
}

template <typename Record>
json to_json(const ValidationReport<Record>& report) {
  json failures = json::array();
  for (const auto& f : report.failures) {
    failures.push_back({{"index", f.index}, {"reason", f.reason}, {"detail", f.detail}});
  }
  return {{"input", report.input_count},
          {"retained", report.retained.size()},
          {"failures", failures}};
}

// ---------------------------------------------------------------------------
// Text similarity

inline std::vector<std::string> lower_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) {
    std::transform(tok.begin(), tok.end(), tok.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.push_back(tok);
  }
  return out;
}

/// Jaccard similarity of lowercased whitespace token sets; two empty strings
/// count as a full match.
inline double token_overlap(const std::string& a, const std::string& b) {
  const auto ta = lower_tokens(a);
  const auto tb = lower_tokens(b);
  const std::set<std::string> sa(ta.begin(), ta.end());
  const std::set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Cosine between term-frequency vectors; 0 when either side has no tokens.
inline double bow_similarity(const std::string& a, const std::string& b) {
  std::map<std::string, double> fa, fb;
  for (auto& t : lower_tokens(a)) fa[t] += 1.0;
  for (auto& t : lower_tokens(b)) fb[t] += 1.0;
  if (fa.empty() || fb.empty()) return 0.0;
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (const auto& [t, c] : fa) {
    aa += c * c;
    auto it = fb.find(t);
    if (it != fb.end()) ab += c * it->second;
  }
  for (const auto& [t, c] : fb) bb += c * c;
  return ab / std::sqrt(aa * bb);
}

inline bool titles_match(const std::string& a, const std::string& b) {
  const auto la = lower_tokens(a);
  const auto lb = lower_tokens(b);
  auto join = [](const std::vector<std::string>& toks) {
    std::string s;
    for (const auto& t : toks) s += (s.empty() ? "" : " ") + t;
    return s;
  };
  const std::string ja = join(la);
  const std::string jb = join(lb);
  if (ja == jb) return true;
  if (!ja.empty() && !jb.empty() &&
      (ja.find(jb) != std::string::npos || jb.find(ja) != std::string::npos)) {
    return true;
  }
  return token_overlap(a, b) >= 0.7;
}

struct BoundaryPairOptions {
  double bow_start = 0.5;
  double bow_floor = 0.2;
  double bow_step = 0.1;
};

struct BoundaryPairSet {
  std::vector<PairRecord> pairs;  // label-1 first, then label-0, each sorted by id
  double threshold = 0.0;         // responsibilities threshold that was used
};

/// Label-1 pairs are the role-boundary negatives; label-0 pairs are
/// positives whose titles match and whose responsibilities overlap at an
/// adaptively lowered bag-of-words threshold. Classes are balanced 1:1 by
/// truncating the larger one after sorting by (query_id, cand_id).
inline BoundaryPairSet build_boundary_pairs(const std::vector<PairRecord>& positives,
                                            const std::vector<PairRecord>& role_negs,
                                            const EmbeddingStore& store,
                                            BoundaryPairOptions opts = {}) {
  std::vector<PairRecord> ones;
  for (PairRecord r : role_negs) {
    r.label = 1;
    ones.push_back(std::move(r));
  }
  if (ones.empty()) throw Error(ErrorCode::EmptyCorpus, "no role-boundary negatives");

  struct Candidate {
    PairRecord record;
    double bow;
  };
  std::vector<Candidate> title_ok;
  for (const PairRecord& r : positives) {
    const auto& q = store.record(r.query_id);
    const auto& c = store.record(r.cand_id);
    if (!titles_match(q.meta_or("title"), c.meta_or("title"))) continue;
    PairRecord zero = r;
    zero.label = 0;
    title_ok.push_back(
        {zero, bow_similarity(q.meta_or("responsibilities"), c.meta_or("responsibilities"))});
  }

  std::vector<PairRecord> zeros;
  double threshold = opts.bow_start;
  for (int step = 0;; ++step) {
    threshold = std::max(opts.bow_start - step * opts.bow_step, opts.bow_floor);
    zeros.clear();
    for (const auto& c : title_ok) {
      if (c.bow >= threshold - 1e-12) zeros.push_back(c.record);
    }
    if (zeros.size() >= ones.size() || threshold <= opts.bow_floor) break;
  }
  if (zeros.empty()) {
    throw Error(ErrorCode::InsufficientNegatives,
                "no title-matched positives at bag-of-words floor " + std::to_string(opts.bow_floor));
  }

  auto by_id = [](const PairRecord& a, const PairRecord& b) {
    return std::tie(a.query_id, a.cand_id) < std::tie(b.query_id, b.cand_id);
  };
  std::sort(ones.begin(), ones.end(), by_id);
  std::sort(zeros.begin(), zeros.end(), by_id);
  const std::size_t n = std::min(ones.size(), zeros.size());
  ones.resize(n);
  zeros.resize(n);

  BoundaryPairSet out;
  out.threshold = threshold;
  out.pairs = std::move(ones);
  out.pairs.insert(out.pairs.end(), zeros.begin(), zeros.end());
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

template <typename Record>
struct CorpusSplit {
  std::vector<Record> train;
  std::vector<Record> validation;
  std::int64_t split_seed = 0;
  double validation_fraction = 0.0;
};

/// Seeded shuffle, then the last ceil(fraction * N) records go to validation.
template <typename Record>
CorpusSplit<Record> split_corpus(const std::vector<Record>& records, double fraction,
                                 std::int64_t seed) {
  if (records.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot split an empty corpus");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "validation fraction must be in (0, 1)");
  }
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_val = std::min(
      records.size(),
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(records.size()) - 1e-9)));
  CorpusSplit<Record> split;
  split.split_seed = seed;
  split.validation_fraction = fraction;
  const std::size_t n_train = records.size() - n_val;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? split.train : split.validation).push_back(records[order[i]]);
  }
  return split;
}

}  // namespace shortlist
