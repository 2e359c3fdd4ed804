#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "shortlist/linalg.hpp"

namespace shortlist {

/// Round-1 weights and hinge margins.
struct Round1Weights {
  double w_p = 1.0;
  double w_r = 0.25;
  double w_k = 0.10;
  double w_d = 0.05;
  double m_r = 0.10;
  double m_k = 0.05;
};

struct MnrlConfig {
  double temperature = 0.05;
};

struct PairLoss {
  double loss = 0.0;
  Vec g_q;
  Vec g_c;
};

/// w_p (1 - cos(q, c))^2 + w_d (MSE(q, t_q) + MSE(c, t_c)).
inline PairLoss pair_loss(ConstView e_q, ConstView e_c, ConstView t_q, ConstView t_c, double w_p,
                          double w_d) {
  require_same_dim(e_q.size(), e_c.size(), "pair_loss");
  require_same_dim(e_q.size(), t_q.size(), "pair_loss teacher");
  require_same_dim(e_c.size(), t_c.size(), "pair_loss teacher");
  PairLoss out;
  out.g_q.assign(e_q.size(), 0.0);
  out.g_c.assign(e_c.size(), 0.0);
  const double c = cosine(e_q, e_c);
  out.loss = w_p * (1.0 - c) * (1.0 - c) +
             w_d * (mean_squared_error(e_q, t_q) + mean_squared_error(e_c, t_c));
  accumulate_cosine_grad(e_q, e_c, -2.0 * w_p * (1.0 - c), out.g_q, out.g_c);
  accumulate_mse_grad(e_q, t_q, w_d, out.g_q);
  accumulate_mse_grad(e_c, t_c, w_d, out.g_c);
  return out;
}

struct GroupLoss {
  double loss = 0.0;
  // Weighted components; they sum to `loss`.
  double pos_term = 0.0;
  double role_term = 0.0;
  double cons_term = 0.0;
  double distill_term = 0.0;
  // Margin shortfalls m - (cos+ - cos-); the hinge is inactive when <= 0.
  double role_slack = 0.0;
  double cons_slack = 0.0;
  Vec g_q, g_pos, g_role, g_cons;
};

/// Grouped ranking objective: alignment with the positive, squared hinges
/// against the role-boundary and constraint negatives, and distillation of
/// the query and positive towards their teachers.
inline GroupLoss group_loss(ConstView e_q, ConstView e_pos, ConstView e_role, ConstView e_cons,
                            ConstView t_q, ConstView t_pos, const Round1Weights& w) {
  const std::size_t d = e_q.size();
  for (auto v : {e_pos, e_role, e_cons, t_q, t_pos}) require_same_dim(v.size(), d, "group_loss");
  GroupLoss out;
  out.g_q.assign(d, 0.0);
  out.g_pos.assign(d, 0.0);
  out.g_role.assign(d, 0.0);
  out.g_cons.assign(d, 0.0);

  const double cp = cosine(e_q, e_pos);
  const double cr = cosine(e_q, e_role);
  const double ck = cosine(e_q, e_cons);
  out.role_slack = w.m_r - (cp - cr);
  out.cons_slack = w.m_k - (cp - ck);
  const double hr = std::max(0.0, out.role_slack);
  const double hk = std::max(0.0, out.cons_slack);

  out.pos_term = w.w_p * (1.0 - cp) * (1.0 - cp);
  out.role_term = w.w_r * hr * hr;
  out.cons_term = w.w_k * hk * hk;
  out.distill_term = w.w_d * (mean_squared_error(e_q, t_q) + mean_squared_error(e_pos, t_pos));
  out.loss = out.pos_term + out.role_term + out.cons_term + out.distill_term;

  const double d_cp = -2.0 * w.w_p * (1.0 - cp) - 2.0 * w.w_r * hr - 2.0 * w.w_k * hk;
  accumulate_cosine_grad(e_q, e_pos, d_cp, out.g_q, out.g_pos);
  if (hr > 0.0) accumulate_cosine_grad(e_q, e_role, 2.0 * w.w_r * hr, out.g_q, out.g_role);
  if (hk > 0.0) accumulate_cosine_grad(e_q, e_cons, 2.0 * w.w_k * hk, out.g_q, out.g_cons);
  accumulate_mse_grad(e_q, t_q, w.w_d, out.g_q);
  accumulate_mse_grad(e_pos, t_pos, w.w_d, out.g_pos);
  return out;
}

/// One anchor of an MNRL batch. Ids are optional; when present they are used
/// to drop pool members that are the anchor's own positive under another name.
struct MnrlExample {
  ConstView q;
  ConstView pos;
  std::vector<ConstView> negs;
  std::string pos_id;
  std::vector<std::string> neg_ids;
};

struct MnrlLoss {
  double loss = 0.0;
  std::vector<Vec> g_q;
  std::vector<Vec> g_pos;
  std::vector<std::vector<Vec>> g_negs;
};

/// Softmax cross-entropy of each anchor's positive against every in-batch
/// positive and every explicit negative in the batch, averaged over anchors.
inline MnrlLoss mnrl_loss(const std::vector<MnrlExample>& batch, const MnrlConfig& cfg) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "mnrl batch is empty");
  if (!(cfg.temperature > 0.0)) throw Error(ErrorCode::ConfigInvalid, "temperature must be > 0");
  const std::size_t n = batch.size();
  const std::size_t d = batch.front().q.size();
  MnrlLoss out;
  out.g_q.assign(n, Vec(d, 0.0));
  out.g_pos.assign(n, Vec(d, 0.0));
  out.g_negs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    require_same_dim(batch[i].q.size(), d, "mnrl");
    require_same_dim(batch[i].pos.size(), d, "mnrl");
    for (auto neg : batch[i].negs) require_same_dim(neg.size(), d, "mnrl");
    out.g_negs[i].assign(batch[i].negs.size(), Vec(d, 0.0));
  }

  struct PoolEntry {
    ConstView vec;
    Vec* grad;
  };
  const double inv_tau = 1.0 / cfg.temperature;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const MnrlExample& anchor = batch[i];
    auto duplicate_of_target = [&](const std::string& id) {
      return !anchor.pos_id.empty() && id == anchor.pos_id;
    };
    std::vector<PoolEntry> pool;
    pool.push_back({anchor.pos, &out.g_pos[i]});  // target at index 0
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && !duplicate_of_target(batch[j].pos_id)) {
        pool.push_back({batch[j].pos, &out.g_pos[j]});
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < batch[j].negs.size(); ++k) {
        const std::string& id = k < batch[j].neg_ids.size() ? batch[j].neg_ids[k] : std::string();
        if (!duplicate_of_target(id)) pool.push_back({batch[j].negs[k], &out.g_negs[j][k]});
      }
    }

    std::vector<double> logits(pool.size());
    for (std::size_t p = 0; p < pool.size(); ++p) logits[p] = cosine(anchor.q, pool[p].vec) * inv_tau;
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const double lse = mx + std::log(z);
    total += lse - logits[0];

    for (std::size_t p = 0; p < pool.size(); ++p) {
      const double prob = std::exp(logits[p] - lse);
      const double coef = (prob - (p == 0 ? 1.0 : 0.0)) * inv_tau / static_cast<double>(n);
      if (coef == 0.0) continue;
      accumulate_cosine_grad(anchor.q, pool[p].vec, coef, out.g_q[i], *pool[p].grad);
    }
  }
  out.loss = total / static_cast<double>(n);
  return out;
}

struct BceLoss {
  double loss = 0.0;
  Vec g_logits;
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Mean binary cross-entropy on logits in the stable form
/// max(z, 0) - z y + log(1 + exp(-|z|)).
inline BceLoss bce_loss(ConstView logits, std::span<const int> labels) {
  if (logits.empty()) throw Error(ErrorCode::EmptyBatch, "bce batch is empty");
  require_same_dim(logits.size(), labels.size(), "bce labels");
  BceLoss out;
  out.g_logits.resize(logits.size());
  const double n = static_cast<double>(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    const double y = labels[i] ? 1.0 : 0.0;
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    out.g_logits[i] = (sigmoid(z) - y) / n;
  }
  out.loss = total / n;
  return out;
}

}  // namespace shortlist
