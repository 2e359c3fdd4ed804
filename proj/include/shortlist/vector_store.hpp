#pragma once

#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "shortlist/jsonl.hpp"
#include "shortlist/linalg.hpp"

namespace shortlist {

enum class RecordKind { Query, Candidate };

inline std::string_view to_string(RecordKind k) {
  return k == RecordKind::Query ? "query" : "candidate";
}

struct EmbeddingRecord {
  std::string id;
  Vec vector;
  RecordKind kind = RecordKind::Candidate;
  std::map<std::string, std::string> meta;

  std::string meta_or(const std::string& key, const std::string& fallback = {}) const {
    auto it = meta.find(key);
    return it == meta.end() ? fallback : it->second;
  }
};

/// Immutable, id-indexed set of unit vectors. Every vector also has a
/// teacher vector (the frozen pre-adaptation embedding); when none is given
/// the teacher is the vector itself.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  /// Validates and normalizes the records. Throws DimensionMismatch,
  /// DuplicateId or ZeroVector.
  static EmbeddingStore from_records(std::vector<EmbeddingRecord> records,
                                     std::optional<std::size_t> expect_dim = std::nullopt,
                                     std::optional<std::vector<Vec>> teachers = std::nullopt) {
    EmbeddingStore store;
    store.records_ = std::move(records);
    if (!store.records_.empty()) {
      store.dim_ = expect_dim.value_or(store.records_.front().vector.size());
    } else {
      store.dim_ = expect_dim.value_or(0);
    }
    for (std::size_t i = 0; i < store.records_.size(); ++i) {
      store.ingest(store.records_[i], i, "record " + std::to_string(i));
    }
    if (teachers) {
      require_same_dim(teachers->size(), store.records_.size(), "teacher count");
      for (Vec& t : *teachers) {
        require_same_dim(t.size(), store.dim_, "teacher dim");
        t = normalized(t);
      }
      store.teachers_ = std::move(*teachers);
    }
    return store;
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  const std::vector<EmbeddingRecord>& records() const noexcept { return records_; }

  const EmbeddingRecord& record(const std::string& id) const { return records_[index_of(id)]; }

  ConstView vector(const std::string& id) const { return records_[index_of(id)].vector; }

  ConstView teacher(const std::string& id) const {
    const std::size_t i = index_of(id);
    return teachers_.empty() ? ConstView(records_[i].vector) : ConstView(teachers_[i]);
  }

  bool has_explicit_teacher() const noexcept { return !teachers_.empty(); }

  std::size_t index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(ErrorCode::UnknownId, "id not in store", id);
    return it->second;
  }

  /// FNV-1a over ids and raw vector bytes, used to check that training never
  /// touches the store.
  std::string fingerprint() const {
    std::string bytes;
    for (const auto& r : records_) {
      bytes += r.id;
      bytes.push_back('\0');
      bytes.append(reinterpret_cast<const char*>(r.vector.data()), r.vector.size() * sizeof(double));
    }
    for (const auto& t : teachers_) {
      bytes.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
    }
    return fnv1a_hex(bytes);
  }

 private:
  void ingest(EmbeddingRecord& r, std::size_t i, const std::string& where) {
    if (r.id.empty()) throw Error(ErrorCode::MalformedRecord, "empty id", where);
    if (r.vector.size() != dim_) {
      throw Error(ErrorCode::DimensionMismatch,
                  "expected dim " + std::to_string(dim_) + ", got " + std::to_string(r.vector.size()),
                  r.id);
    }
    if (dim_ < 2) throw Error(ErrorCode::DimensionMismatch, "dimension must be at least 2", r.id);
    if (!index_.emplace(r.id, i).second) throw Error(ErrorCode::DuplicateId, "duplicate id", r.id);
    for (double x : r.vector) {
      if (!std::isfinite(x)) throw Error(ErrorCode::MalformedRecord, "non-finite component", r.id);
    }
    const double n = l2_norm(r.vector);
    if (!(n > 0.0)) throw Error(ErrorCode::ZeroVector, "zero vector", r.id);
    // Already-unit vectors are kept bit-for-bit so merged stores score
    // exactly like the adapter they came from.
    if (std::abs(n - 1.0) > 1e-15) {
      for (double& x : r.vector) x /= n;
    }
  }

  std::size_t dim_ = 0;
  std::vector<EmbeddingRecord> records_;
  std::vector<Vec> teachers_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline ConstView get_vector(const EmbeddingStore& store, const std::string& id) {
  return store.vector(id);
}

inline EmbeddingRecord parse_embedding_record(const json& obj) {
  EmbeddingRecord r;
  if (!obj.contains("id") || !obj.at("id").is_string()) {
    throw Error(ErrorCode::MalformedRecord, "missing string field `id`");
  }
  r.id = obj.at("id").get<std::string>();
  if (!obj.contains("vector") || !obj.at("vector").is_array()) {
    throw Error(ErrorCode::MalformedRecord, "missing array field `vector`", r.id);
  }
  for (const auto& x : obj.at("vector")) {
    if (!x.is_number()) throw Error(ErrorCode::MalformedRecord, "non-numeric vector entry", r.id);
    r.vector.push_back(x.get<double>());
  }
  const std::string kind = obj.value("kind", std::string("candidate"));
  if (kind == "query") {
    r.kind = RecordKind::Query;
  } else if (kind == "candidate") {
    r.kind = RecordKind::Candidate;
  } else {
    throw Error(ErrorCode::MalformedRecord, "kind must be query or candidate", r.id);
  }
  if (obj.contains("meta")) {
    const auto& meta = obj.at("meta");
    if (!meta.is_object()) throw Error(ErrorCode::MalformedRecord, "meta must be an object", r.id);
    for (auto it = meta.begin(); it != meta.end(); ++it) {
      if (!it.value().is_string()) {
        throw Error(ErrorCode::MalformedRecord, "meta values must be strings", r.id);
      }
      r.meta[it.key()] = it.value().get<std::string>();
    }
  }
  return r;
}

inline EmbeddingStore read_store(std::istream& in, const std::string& source,
                                 std::optional<std::size_t> expect_dim = std::nullopt) {
  std::vector<EmbeddingRecord> records;
  std::optional<std::size_t> dim = expect_dim;
  for_each_json_line(in, source, [&](const json& obj, std::size_t line) {
    const std::string where = source + ":" + std::to_string(line);
    EmbeddingRecord r;
    try {
      r = parse_embedding_record(obj);
    } catch (const Error& e) {
      throw Error(e.code(), e.message(), where);
    }
    if (!dim) dim = r.vector.size();
    if (r.vector.size() != *dim) {
      throw Error(ErrorCode::DimensionMismatch,
                  "expected dim " + std::to_string(*dim) + ", got " + std::to_string(r.vector.size()),
                  where);
    }
    records.push_back(std::move(r));
  });
  return EmbeddingStore::from_records(std::move(records), dim);
}

/// Loads a line-delimited embedding file; see the README for the format.
inline EmbeddingStore load_store(const std::filesystem::path& path,
                                 std::optional<std::size_t> expect_dim = std::nullopt) {
  auto in = open_input(path);
  return read_store(in, path.string(), expect_dim);
}

inline json embedding_record_json(const EmbeddingRecord& r) {
  json obj;
  obj["id"] = r.id;
  obj["vector"] = r.vector;
  obj["kind"] = std::string(to_string(r.kind));
  if (!r.meta.empty()) obj["meta"] = r.meta;
  return obj;
}

inline void write_store(std::ostream& out, const EmbeddingStore& store, const Stamp* stamp = nullptr) {
  write_stamp_comment(out, stamp);
  for (const auto& r : store.records()) out << embedding_record_json(r).dump() << "\n";
}

inline void save_store(const std::filesystem::path& path, const EmbeddingStore& store,
                       const Stamp* stamp = nullptr) {
  auto out = open_output(path);
  write_store(out, store, stamp);
}

}  // namespace shortlist
