#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "shortlist/adapter.hpp"
#include "shortlist/corpus.hpp"
#include "shortlist/losses.hpp"
#include "shortlist/optim.hpp"
#include "shortlist/train_types.hpp"

namespace shortlist {

struct AdapterOptions {
  std::size_t rank = 16;
  double alpha = 32.0;
};

struct Round1Data {
  std::vector<PairRecord> card;
  std::vector<PairRecord> semantic;
  std::vector<GroupRecord> groups;

  bool empty() const { return card.empty() && semantic.empty() && groups.empty(); }
};

struct AdapterTrainResult {
  LowRankAdapter adapter;
  TrainTrace trace;
};

namespace detail {

inline void require_ids(const EmbeddingStore& store, const std::vector<std::string>& ids) {
  for (const auto& id : ids) {
    if (!store.contains(id)) throw Error(ErrorCode::UnresolvableId, "id not in store", id);
  }
}

/// Adapted embeddings for a list of ids plus their forward traces.
struct AdaptedBatch {
  std::vector<AdapterTrace> traces;
  std::vector<Vec> grads;

  std::size_t add(const LowRankAdapter& a, const EmbeddingStore& store, const std::string& id) {
    traces.push_back(adapter_forward(a, store.vector(id)));
    grads.emplace_back(a.dim, 0.0);
    return traces.size() - 1;
  }
  ConstView out(std::size_t i) const { return traces[i].output; }
  void backward(LowRankAdapter& a, double scale) {
    for (std::size_t i = 0; i < traces.size(); ++i) {
      for (double& g : grads[i]) g *= scale;
      adapter_backward(a, traces[i], grads[i]);
    }
  }
};

inline void add_to(Vec& dst, const Vec& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

inline double pair_example(LowRankAdapter& a, const EmbeddingStore& store, const PairRecord& p,
                           const Round1Weights& w, double grad_scale) {
  AdaptedBatch b;
  const auto q = b.add(a, store, p.query_id);
  const auto c = b.add(a, store, p.cand_id);
  const PairLoss l = pair_loss(b.out(q), b.out(c), store.teacher(p.query_id),
                               store.teacher(p.cand_id), w.w_p, w.w_d);
  if (grad_scale != 0.0) {
    add_to(b.grads[q], l.g_q);
    add_to(b.grads[c], l.g_c);
    b.backward(a, grad_scale);
  }
  return l.loss;
}

inline double group_example(LowRankAdapter& a, const EmbeddingStore& store, const GroupRecord& g,
                            const Round1Weights& w, double grad_scale) {
  AdaptedBatch b;
  const auto q = b.add(a, store, g.query_id);
  const auto p = b.add(a, store, g.pos_id);
  const auto r = b.add(a, store, g.role_neg_id);
  const auto k = b.add(a, store, g.cons_neg_id);
  const GroupLoss l = group_loss(b.out(q), b.out(p), b.out(r), b.out(k), store.teacher(g.query_id),
                                 store.teacher(g.pos_id), w);
  if (grad_scale != 0.0) {
    add_to(b.grads[q], l.g_q);
    add_to(b.grads[p], l.g_pos);
    add_to(b.grads[r], l.g_role);
    add_to(b.grads[k], l.g_cons);
    b.backward(a, grad_scale);
  }
  return l.loss;
}

inline double mnrl_batch(LowRankAdapter& a, const EmbeddingStore& store,
                         const std::vector<const TripletRecord*>& triplets, const MnrlConfig& cfg,
                         bool with_grad) {
  AdaptedBatch b;
  struct Slots {
    std::size_t q, pos;
    std::vector<std::size_t> negs;
  };
  std::vector<Slots> slots;
  for (const TripletRecord* t : triplets) {
    Slots s;
    s.q = b.add(a, store, t->query_id);
    s.pos = b.add(a, store, t->pos_id);
    for (const auto& n : t->neg_ids) s.negs.push_back(b.add(a, store, n));
    slots.push_back(std::move(s));
  }
  std::vector<MnrlExample> batch;
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    MnrlExample ex{b.out(slots[i].q), b.out(slots[i].pos), {}, triplets[i]->pos_id, triplets[i]->neg_ids};
    for (auto n : slots[i].negs) ex.negs.push_back(b.out(n));
    batch.push_back(std::move(ex));
  }
  const MnrlLoss l = mnrl_loss(batch, cfg);
  if (with_grad) {
    for (std::size_t i = 0; i < slots.size(); ++i) {
      add_to(b.grads[slots[i].q], l.g_q[i]);
      add_to(b.grads[slots[i].pos], l.g_pos[i]);
      for (std::size_t k = 0; k < slots[i].negs.size(); ++k) add_to(b.grads[slots[i].negs[k]], l.g_negs[i][k]);
    }
    b.backward(a, 1.0);
  }
  return l.loss;
}

/// Runs one epoch of minibatch AdamW over `n` examples; returns the mean
/// per-example training loss.
inline double run_epoch(LowRankAdapter& a, AdamW& optim, std::size_t n, std::size_t batch_size,
                        std::uint64_t shuffle_seed,
                        const std::function<double(std::size_t, double)>& example) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);
  double total = 0.0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    const double scale = 1.0 / static_cast<double>(end - start);
    optim.zero_grad();
    for (std::size_t i = start; i < end; ++i) total += example(order[i], scale);
    optim.step();
  }
  (void)a;
  return total / static_cast<double>(n);
}

}  // namespace detail

/// Validation objective for round 1: the grouped ranking loss when groups
/// exist, otherwise the pair loss on semantic (then card) pairs.
inline double round1_eval_loss(const LowRankAdapter& adapter, const EmbeddingStore& store,
                               const Round1Data& data, const Round1Weights& w) {
  LowRankAdapter a = adapter;
  if (!data.groups.empty()) {
    double t = 0.0;
    for (const auto& g : data.groups) t += detail::group_example(a, store, g, w, 0.0);
    return t / static_cast<double>(data.groups.size());
  }
  const auto& pairs = data.semantic.empty() ? data.card : data.semantic;
  if (pairs.empty()) return 0.0;
  double t = 0.0;
  for (const auto& p : pairs) t += detail::pair_example(a, store, p, w, 0.0);
  return t / static_cast<double>(pairs.size());
}

/// Round-1 curriculum on a single adapter: card warm-up and semantic
/// alignment with the pair loss, then grouped ranking. Epoch counts per
/// stage come from cfg.stage_epochs. The adapter from the epoch with the
/// lowest validation loss is returned.
inline AdapterTrainResult train_round1(const EmbeddingStore& store, const Round1Data& train,
                                       const Round1Data& validation, const TrainConfig& cfg,
                                       const Round1Weights& w, const AdapterOptions& opts = {}) {
  validate(cfg);
  for (const auto& p : train.card) detail::require_ids(store, p.ids());
  for (const auto& p : train.semantic) detail::require_ids(store, p.ids());
  for (const auto& g : train.groups) detail::require_ids(store, g.ids());
  for (const auto& p : validation.card) detail::require_ids(store, p.ids());
  for (const auto& p : validation.semantic) detail::require_ids(store, p.ids());
  for (const auto& g : validation.groups) detail::require_ids(store, g.ids());

  AdapterTrainResult result;
  result.adapter = LowRankAdapter::fresh(store.dim(), std::min(opts.rank, store.dim()), opts.alpha,
                                         RoundTag::R1, static_cast<std::uint64_t>(cfg.seed));
  result.trace.lr = cfg.lr;
  LowRankAdapter& a = result.adapter;
  AdamW optim({&a.A, &a.B}, cfg.lr, cfg.weight_decay);
  BestTracker<LowRankAdapter> best;
  const Round1Data& val = validation.empty() ? train : validation;

  int epoch = 0;
  bool stop = false;
  auto run_stage = [&](const char* name, int epochs, std::size_t n,
                       const std::function<double(std::size_t, double)>& example) {
    if (n == 0) return;
    for (int e = 0; e < epochs && !stop; ++e) {
      ++epoch;
      const double train_loss = detail::run_epoch(a, optim, n, cfg.batch_size,
                                                  static_cast<std::uint64_t>(cfg.seed + epoch), example);
      best.record(result.trace, {name, epoch, train_loss, round1_eval_loss(a, store, val, w)}, a);
      if (early_stop_check(result.trace, cfg.early_stop_patience)) {
        stop = true;
        result.trace.stopped_early = true;
      }
    }
  };

  run_stage("card", cfg.stage_epochs[0], train.card.size(), [&](std::size_t i, double s) {
    return detail::pair_example(a, store, train.card[i], w, s);
  });
  run_stage("semantic", cfg.stage_epochs[1], train.semantic.size(), [&](std::size_t i, double s) {
    return detail::pair_example(a, store, train.semantic[i], w, s);
  });
  run_stage("group", cfg.stage_epochs[2], train.groups.size(), [&](std::size_t i, double s) {
    return detail::group_example(a, store, train.groups[i], w, s);
  });

  if (best.has_best()) result.adapter = best.best();
  result.adapter.A.zero_grad();
  result.adapter.B.zero_grad();
  return result;
}

/// Overload for already-split training data; the training data is also used
/// for model selection.
inline AdapterTrainResult train_round1(const EmbeddingStore& store,
                                       const std::vector<PairRecord>& card_pairs,
                                       const std::vector<PairRecord>& semantic_pairs,
                                       const std::vector<GroupRecord>& groups, const TrainConfig& cfg,
                                       const Round1Weights& w, const AdapterOptions& opts = {}) {
  return train_round1(store, Round1Data{card_pairs, semantic_pairs, groups}, Round1Data{}, cfg, w, opts);
}

inline double round2_eval_loss(const LowRankAdapter& adapter, const EmbeddingStore& store,
                               const std::vector<TripletRecord>& triplets, std::size_t batch_size,
                               const MnrlConfig& mnrl) {
  LowRankAdapter a = adapter;
  double total = 0.0;
  for (std::size_t start = 0; start < triplets.size(); start += batch_size) {
    const std::size_t end = std::min(triplets.size(), start + batch_size);
    std::vector<const TripletRecord*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&triplets[i]);
    total += detail::mnrl_batch(a, store, batch, mnrl, false) * static_cast<double>(end - start);
  }
  return total / static_cast<double>(triplets.size());
}

/// Round-2 MNRL training of a fresh adapter over the round-1-merged store,
/// with seeded per-epoch shuffling and validation early stopping.
inline AdapterTrainResult train_round2(const EmbeddingStore& store,
                                       const std::vector<TripletRecord>& train,
                                       const std::vector<TripletRecord>& validation,
                                       const TrainConfig& cfg, const MnrlConfig& mnrl,
                                       const AdapterOptions& opts = {8, 32.0}) {
  validate(cfg);
  if (train.empty()) throw Error(ErrorCode::EmptyCorpus, "no training triplets");
  for (const auto& t : train) detail::require_ids(store, t.ids());
  for (const auto& t : validation) detail::require_ids(store, t.ids());
  const auto& val = validation.empty() ? train : validation;

  AdapterTrainResult result;
  result.adapter = LowRankAdapter::fresh(store.dim(), std::min(opts.rank, store.dim()), opts.alpha,
                                         RoundTag::R2, static_cast<std::uint64_t>(cfg.seed));
  result.trace.lr = cfg.lr;
  LowRankAdapter& a = result.adapter;
  AdamW optim({&a.A, &a.B}, cfg.lr, cfg.weight_decay);
  BestTracker<LowRankAdapter> best;

  std::vector<std::size_t> order(train.size());
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(static_cast<std::uint64_t>(cfg.seed + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const TripletRecord*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);
      optim.zero_grad();
      total += detail::mnrl_batch(a, store, batch, mnrl, true) * static_cast<double>(end - start);
      optim.step();
    }
    EpochRecord rec{"mnrl", epoch, total / static_cast<double>(train.size()),
                    round2_eval_loss(a, store, val, cfg.batch_size, mnrl)};
    best.record(result.trace, rec, a);
    if (early_stop_check(result.trace, cfg.early_stop_patience)) {
      result.trace.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  if (best.has_best()) result.adapter = best.best();
  result.adapter.A.zero_grad();
  result.adapter.B.zero_grad();
  return result;
}

}  // namespace shortlist
