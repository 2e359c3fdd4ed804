#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "shortlist/jsonl.hpp"
#include "shortlist/linalg.hpp"
#include "shortlist/vector_store.hpp"

namespace shortlist {

enum class RoundTag { R1, R2 };

inline std::string_view to_string(RoundTag t) { return t == RoundTag::R1 ? "R1" : "R2"; }

inline RoundTag parse_round_tag(const std::string& s) {
  if (s == "R1") return RoundTag::R1;
  if (s == "R2") return RoundTag::R2;
  throw Error(ErrorCode::MalformedRecord, "round_tag must be R1 or R2");
}

/// Residual low-rank map e = normalize(v + (alpha / rank) * B A v) over a
/// frozen embedding. A is rank x dim, B is dim x rank, both row-major.
struct LowRankAdapter {
  std::size_t dim = 0;
  std::size_t rank = 0;
  double alpha = 32.0;
  RoundTag round_tag = RoundTag::R1;
  ParamTensor A;
  ParamTensor B;

  double scale() const { return alpha / static_cast<double>(rank); }

  /// A is seeded uniform(-1/sqrt(dim), 1/sqrt(dim)); B is zero, so the fresh
  /// adapter is exactly the identity.
  static LowRankAdapter fresh(std::size_t dim, std::size_t rank, double alpha, RoundTag tag,
                              std::uint64_t seed) {
    if (rank == 0 || rank > dim) {
      throw Error(ErrorCode::ConfigInvalid, "adapter rank must be in [1, dim]");
    }
    if (!(alpha > 0.0)) throw Error(ErrorCode::ConfigInvalid, "adapter alpha must be positive");
    LowRankAdapter a;
    a.dim = dim;
    a.rank = rank;
    a.alpha = alpha;
    a.round_tag = tag;
    a.A = ParamTensor({rank, dim});
    a.B = ParamTensor({dim, rank});
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& x : a.A.values) x = u(rng);
    return a;
  }

  static LowRankAdapter r1_default(std::size_t dim, std::uint64_t seed) {
    return fresh(dim, std::min<std::size_t>(16, dim), 32.0, RoundTag::R1, seed);
  }
  static LowRankAdapter r2_default(std::size_t dim, std::uint64_t seed) {
    return fresh(dim, std::min<std::size_t>(8, dim), 32.0, RoundTag::R2, seed);
  }
};

/// Intermediate values kept from a forward pass for the backward pass.
struct AdapterTrace {
  Vec input;
  Vec projected;  // A v
  Vec output;     // unit-norm result
  double pre_norm = 0.0;
};

inline AdapterTrace adapter_forward(const LowRankAdapter& a, ConstView v) {
  require_same_dim(v.size(), a.dim, "adapter input");
  AdapterTrace t;
  t.input.assign(v.begin(), v.end());
  t.projected.assign(a.rank, 0.0);
  matvec(a.A.values, a.rank, a.dim, v, t.projected);
  Vec delta(a.dim, 0.0);
  matvec(a.B.values, a.dim, a.rank, t.projected, delta);
  const double s = a.scale();
  Vec u(v.begin(), v.end());
  bool moved = false;
  for (std::size_t i = 0; i < a.dim; ++i) {
    u[i] += s * delta[i];
    moved = moved || delta[i] != 0.0;
  }
  t.pre_norm = l2_norm(u);
  if (!(t.pre_norm > 1e-12) || !std::isfinite(t.pre_norm)) {
    throw Error(ErrorCode::NormCollapse, "adapter output collapsed to zero");
  }
  // A zero residual leaves the (already unit) input untouched bit for bit.
  if (moved) {
    for (double& x : u) x /= t.pre_norm;
  }
  t.output = std::move(u);
  return t;
}

inline Vec apply(const LowRankAdapter& a, ConstView v) { return adapter_forward(a, v).output; }

/// Given dL/d(output), accumulates dL/dA and dL/dB into the adapter grads.
inline void adapter_backward(LowRankAdapter& a, const AdapterTrace& t, ConstView grad_out) {
  const std::size_t d = a.dim;
  const std::size_t r = a.rank;
  // Through the normalization: g_u = (g - (e.g) e) / |u|.
  const double eg = dot(t.output, grad_out);
  Vec g_u(d);
  for (std::size_t i = 0; i < d; ++i) g_u[i] = (grad_out[i] - eg * t.output[i]) / t.pre_norm;
  const double s = a.scale();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < r; ++k) a.B.grad[i * r + k] += s * g_u[i] * t.projected[k];
  }
  Vec g_proj(r, 0.0);
  matvec_transposed(a.B.values, d, r, g_u, g_proj);
  for (std::size_t k = 0; k < r; ++k) {
    const double gk = s * g_proj[k];
    if (gk == 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) a.A.grad[k * d + j] += gk * t.input[j];
  }
}

/// New store whose vectors are the adapted ones; its teachers are the merged
/// vectors themselves so the next round distills against the new base.
inline EmbeddingStore merge(const EmbeddingStore& base, const LowRankAdapter& a) {
  require_same_dim(base.dim(), a.dim, "merge");
  std::vector<EmbeddingRecord> records = base.records();
  for (auto& r : records) r.vector = shortlist::apply(a, r.vector);
  return EmbeddingStore::from_records(std::move(records), base.dim());
}

inline json to_json(const LowRankAdapter& a) {
  return {{"dim", a.dim},
          {"rank", a.rank},
          {"alpha", a.alpha},
          {"round_tag", std::string(to_string(a.round_tag))},
          {"A", a.A.values},
          {"B", a.B.values}};
}

inline LowRankAdapter adapter_from_json(const json& o) {
  LowRankAdapter a;
  try {
    a.dim = o.at("dim").get<std::size_t>();
    a.rank = o.at("rank").get<std::size_t>();
    a.alpha = o.at("alpha").get<double>();
    a.round_tag = parse_round_tag(o.at("round_tag").get<std::string>());
    a.A = ParamTensor({a.rank, a.dim});
    a.B = ParamTensor({a.dim, a.rank});
    const auto av = o.at("A").get<Vec>();
    const auto bv = o.at("B").get<Vec>();
    require_same_dim(av.size(), a.A.size(), "adapter A");
    require_same_dim(bv.size(), a.B.size(), "adapter B");
    a.A.values = av;
    a.B.values = bv;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, e.what(), "adapter checkpoint");
  }
  if (a.rank == 0 || a.rank > a.dim || !(a.alpha > 0.0)) {
    throw Error(ErrorCode::MalformedRecord, "adapter rank/alpha out of range", "adapter checkpoint");
  }
  return a;
}

inline void save_adapter(const std::filesystem::path& path, const LowRankAdapter& a,
                         const Stamp* stamp = nullptr) {
  json doc = to_json(a);
  apply_stamp(doc, stamp);
  write_json_file(path, doc);
}

inline LowRankAdapter load_adapter(const std::filesystem::path& path) {
  return adapter_from_json(read_json_file(path));
}

}  // namespace shortlist
