#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "shortlist/linalg.hpp"

namespace shortlist {

struct AdamWState {
  Vec m;
  Vec v;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  AdamWState() = default;
  AdamWState(std::size_t n, double learning_rate, double decay)
      : m(n, 0.0), v(n, 0.0), lr(learning_rate), weight_decay(decay) {}
};

/// One AdamW update with decoupled weight decay: the parameter is first
/// shrunk by lr * weight_decay, then moved by the bias-corrected adaptive
/// step. Nothing is modified when the gradient holds a NaN or Inf.
inline void adamw_step(ParamTensor& params, AdamWState& state) {
  require_same_dim(params.grad.size(), params.values.size(), "adamw grad");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  require_same_dim(state.m.size(), params.values.size(), "adamw state");
  for (double g : params.grad) {
    if (!std::isfinite(g)) throw Error(ErrorCode::NonFiniteGradient, "gradient holds NaN or Inf");
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(state.beta1, t);
  const double bias2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& theta = params.values[i];
    const double g = params.grad[i];
    theta -= state.lr * state.weight_decay * theta;
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    theta -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

/// Owns one AdamWState per tensor of a model.
class AdamW {
 public:
  AdamW(std::vector<ParamTensor*> params, double lr, double weight_decay)
      : params_(std::move(params)) {
    for (ParamTensor* p : params_) states_.emplace_back(p->size(), lr, weight_decay);
  }

  void zero_grad() {
    for (ParamTensor* p : params_) p->zero_grad();
  }

  void step() {
    // Check everything first so a bad gradient leaves every tensor untouched.
    for (ParamTensor* p : params_) {
      for (double g : p->grad) {
        if (!std::isfinite(g)) {
          throw Error(ErrorCode::NonFiniteGradient, "gradient holds NaN or Inf");
        }
      }
    }
    for (std::size_t i = 0; i < params_.size(); ++i) adamw_step(*params_[i], states_[i]);
  }

  const std::vector<AdamWState>& states() const noexcept { return states_; }

 private:
  std::vector<ParamTensor*> params_;
  std::vector<AdamWState> states_;
};

}  // namespace shortlist
