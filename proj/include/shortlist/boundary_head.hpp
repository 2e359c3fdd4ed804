#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <vector>

#include "shortlist/corpus.hpp"
#include "shortlist/losses.hpp"
#include "shortlist/optim.hpp"
#include "shortlist/train_types.hpp"
#include "shortlist/vector_store.hpp"

namespace shortlist {

/// Two-layer pair classifier: logit = W2 dropout(relu(W1 h + b1)) + b2 over
/// the 4d interaction features of a (query, candidate) pair.
struct BoundaryHeadParams {
  std::size_t d = 0;
  std::size_t hidden = 256;
  double dropout_p = 0.1;
  ParamTensor W1;  // hidden x 4d
  ParamTensor b1;  // hidden
  ParamTensor W2;  // 1 x hidden
  ParamTensor b2;  // 1

  std::size_t input_dim() const { return 4 * d; }

  static BoundaryHeadParams zeros(std::size_t d, std::size_t hidden, double dropout_p = 0.1) {
    BoundaryHeadParams h;
    h.d = d;
    h.hidden = hidden;
    h.dropout_p = dropout_p;
    h.W1 = ParamTensor({hidden, 4 * d});
    h.b1 = ParamTensor({hidden});
    h.W2 = ParamTensor({1, hidden});
    h.b2 = ParamTensor({1});
    return h;
  }

  /// Weights uniform in +-1/sqrt(fan_in) from a seeded generator, biases zero.
  static BoundaryHeadParams init(std::size_t d, std::size_t hidden, double dropout_p,
                                 std::uint64_t seed) {
    if (d < 1 || hidden < 1) throw Error(ErrorCode::ConfigInvalid, "head sizes must be >= 1");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
      throw Error(ErrorCode::ConfigInvalid, "dropout_p must be in [0, 1)");
    }
    auto h = zeros(d, hidden, dropout_p);
    std::mt19937_64 rng(seed);
    const double b_in = 1.0 / std::sqrt(static_cast<double>(4 * d));
    const double b_hid = 1.0 / std::sqrt(static_cast<double>(hidden));
    std::uniform_real_distribution<double> u1(-b_in, b_in);
    std::uniform_real_distribution<double> u2(-b_hid, b_hid);
    for (double& x : h.W1.values) x = u1(rng);
    for (double& x : h.W2.values) x = u2(rng);
    return h;
  }

  std::vector<ParamTensor*> tensors() { return {&W1, &b1, &W2, &b2}; }
};

/// [q, c, |q - c|, q * c], in that order.
inline Vec pair_features(ConstView e_q, ConstView e_c) {
  require_same_dim(e_q.size(), e_c.size(), "pair_features");
  const std::size_t d = e_q.size();
  Vec h(4 * d);
  for (std::size_t i = 0; i < d; ++i) {
    h[i] = e_q[i];
    h[d + i] = e_c[i];
    h[2 * d + i] = std::abs(e_q[i] - e_c[i]);
    h[3 * d + i] = e_q[i] * e_c[i];
  }
  return h;
}

struct HeadActivations {
  Vec pre;   // W1 h + b1
  Vec mask;  // per-unit multiplier: 0 or 1/(1-p) in training, 1 at inference
  Vec z;     // dropout(relu(pre))
  double logit = 0.0;
};

/// Forward pass. Dropout is inverted (kept units scaled by 1/(1-p)) and only
/// active when `training` is set; `rng` is untouched otherwise.
template <typename Rng>
HeadActivations head_forward(const BoundaryHeadParams& head, ConstView h, bool training, Rng& rng) {
  require_same_dim(h.size(), head.input_dim(), "head input");
  HeadActivations a;
  a.pre.resize(head.hidden);
  matvec(head.W1.values, head.hidden, head.input_dim(), h, a.pre);
  a.mask.assign(head.hidden, 1.0);
  if (training && head.dropout_p > 0.0) {
    std::bernoulli_distribution keep(1.0 - head.dropout_p);
    const double scale = 1.0 / (1.0 - head.dropout_p);
    for (double& m : a.mask) m = keep(rng) ? scale : 0.0;
  }
  a.z.resize(head.hidden);
  double logit = head.b2.values[0];
  for (std::size_t j = 0; j < head.hidden; ++j) {
    a.pre[j] += head.b1.values[j];
    a.z[j] = std::max(0.0, a.pre[j]) * a.mask[j];
    logit += head.W2.values[j] * a.z[j];
  }
  a.logit = logit;
  return a;
}

inline double forward(const BoundaryHeadParams& head, ConstView h) {
  std::mt19937_64 unused(0);
  return head_forward(head, h, false, unused).logit;
}

template <typename Rng>
double forward(const BoundaryHeadParams& head, ConstView h, bool training, Rng& rng) {
  return head_forward(head, h, training, rng).logit;
}

/// Accumulates parameter gradients for dL/dlogit = g_logit.
inline void head_backward(BoundaryHeadParams& head, ConstView h, const HeadActivations& a,
                          double g_logit) {
  const std::size_t in = head.input_dim();
  head.b2.grad[0] += g_logit;
  for (std::size_t j = 0; j < head.hidden; ++j) {
    head.W2.grad[j] += g_logit * a.z[j];
    if (a.pre[j] <= 0.0 || a.mask[j] == 0.0) continue;
    const double g_pre = g_logit * head.W2.values[j] * a.mask[j];
    head.b1.grad[j] += g_pre;
    double* row = head.W1.grad.data() + j * in;
    for (std::size_t i = 0; i < in; ++i) row[i] += g_pre * h[i];
  }
}

/// sigmoid(logit) in inference mode; higher means stronger boundary mismatch.
inline double boundary_score(const BoundaryHeadParams& head, ConstView e_q, ConstView e_c) {
  return sigmoid(forward(head, pair_features(e_q, e_c)));
}

// ---------------------------------------------------------------------------
// Training

struct HeadOptions {
  std::size_t hidden = 256;
  double dropout_p = 0.1;
  double validation_fraction = 0.1;
};

inline TrainConfig head_train_defaults() {
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.weight_decay = 0.01;
  cfg.batch_size = 128;
  cfg.max_epochs = 40;
  cfg.early_stop_patience = 5;
  return cfg;
}

struct HeadTrainResult {
  BoundaryHeadParams head;
  TrainTrace trace;
  std::vector<PairRecord> train_pairs;
  std::vector<PairRecord> validation_pairs;
};

inline double head_eval_loss(const BoundaryHeadParams& head, const std::vector<Vec>& feats,
                             const std::vector<int>& labels) {
  Vec logits(feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) logits[i] = forward(head, feats[i]);
  return bce_loss(logits, labels).loss;
}

/// Trains the head on labeled pairs over a frozen store. A seeded
/// validation split drives model selection and early stopping; with fewer
/// than two pairs (or fraction 0) the training set doubles as validation.
inline HeadTrainResult train_boundary_head(const EmbeddingStore& store,
                                           const std::vector<PairRecord>& pairs,
                                           const TrainConfig& cfg, const HeadOptions& opts = {}) {
  validate(cfg);
  if (pairs.empty()) throw Error(ErrorCode::EmptyCorpus, "no labeled pairs for head training");
  for (const auto& p : pairs) {
    if (!store.contains(p.query_id)) throw Error(ErrorCode::UnresolvableId, "unknown id", p.query_id);
    if (!store.contains(p.cand_id)) throw Error(ErrorCode::UnresolvableId, "unknown id", p.cand_id);
  }

  HeadTrainResult result;
  if (pairs.size() >= 2 && opts.validation_fraction > 0.0) {
    auto split = split_corpus(pairs, opts.validation_fraction, cfg.seed);
    result.train_pairs = std::move(split.train);
    result.validation_pairs = std::move(split.validation);
  } else {
    result.train_pairs = pairs;
    result.validation_pairs = pairs;
  }

  auto featurize = [&](const std::vector<PairRecord>& ps, std::vector<Vec>& feats,
                       std::vector<int>& labels) {
    for (const auto& p : ps) {
      feats.push_back(pair_features(store.vector(p.query_id), store.vector(p.cand_id)));
      labels.push_back(p.label);
    }
  };
  std::vector<Vec> train_x, val_x;
  std::vector<int> train_y, val_y;
  featurize(result.train_pairs, train_x, train_y);
  featurize(result.validation_pairs, val_x, val_y);

  BoundaryHeadParams head =
      BoundaryHeadParams::init(store.dim(), opts.hidden, opts.dropout_p, static_cast<std::uint64_t>(cfg.seed));
  AdamW optim(head.tensors(), cfg.lr, cfg.weight_decay);
  BestTracker<BoundaryHeadParams> best;
  result.trace.lr = cfg.lr;

  std::vector<std::size_t> order(train_x.size());
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(static_cast<std::uint64_t>(cfg.seed + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<HeadActivations> acts;
      Vec logits;
      std::vector<int> labels;
      for (std::size_t b = start; b < end; ++b) {
        acts.push_back(head_forward(head, train_x[order[b]], true, rng));
        logits.push_back(acts.back().logit);
        labels.push_back(train_y[order[b]]);
      }
      const BceLoss bce = bce_loss(logits, labels);
      optim.zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        head_backward(head, train_x[order[b]], acts[b - start], bce.g_logits[b - start]);
      }
      optim.step();
      epoch_loss += bce.loss * static_cast<double>(end - start);
    }
    EpochRecord rec{"head", epoch, epoch_loss / static_cast<double>(order.size()),
                    head_eval_loss(head, val_x, val_y)};
    best.record(result.trace, rec, head);
    if (early_stop_check(result.trace, cfg.early_stop_patience)) {
      result.trace.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  result.head = best.has_best() ? best.best() : head;
  for (ParamTensor* t : result.head.tensors()) t->zero_grad();
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint

inline json to_json(const BoundaryHeadParams& h) {
  return {{"d", h.d},
          {"hidden", h.hidden},
          {"W1", h.W1.values},
          {"b1", h.b1.values},
          {"W2", h.W2.values},
          {"b2", h.b2.values[0]},
          {"dropout_p", h.dropout_p}};
}

inline BoundaryHeadParams head_from_json(const json& o) {
  try {
    auto h = BoundaryHeadParams::zeros(o.at("d").get<std::size_t>(), o.at("hidden").get<std::size_t>(),
                                       o.at("dropout_p").get<double>());
    auto take = [](const json& src, ParamTensor& dst, const char* name) {
      auto v = src.get<Vec>();
      require_same_dim(v.size(), dst.size(), name);
      dst.values = std::move(v);
    };
    take(o.at("W1"), h.W1, "head W1");
    take(o.at("b1"), h.b1, "head b1");
    take(o.at("W2"), h.W2, "head W2");
    h.b2.values[0] = o.at("b2").get<double>();
    return h;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, e.what(), "head checkpoint");
  }
}

inline void save_head(const std::filesystem::path& path, const BoundaryHeadParams& h,
                      const Stamp* stamp = nullptr) {
  json doc = to_json(h);
  apply_stamp(doc, stamp);
  write_json_file(path, doc);
}

inline BoundaryHeadParams load_head(const std::filesystem::path& path) {
  return head_from_json(read_json_file(path));
}

}  // namespace shortlist
