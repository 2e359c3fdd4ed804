#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "shortlist/error.hpp"

namespace shortlist {

using Vec = std::vector<double>;
using ConstView = std::span<const double>;
using MutView = std::span<double>;

inline void require_same_dim(std::size_t a, std::size_t b, const char* where) {
  if (a != b) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(where) + ": " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

inline double dot(ConstView a, ConstView b) {
  require_same_dim(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double l2_norm(ConstView a) { return std::sqrt(dot(a, a)); }

/// Returns a / |a|; throws ZeroVector when the norm is zero or not finite.
inline Vec normalized(ConstView a) {
  const double n = l2_norm(a);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::ZeroVector, "cannot normalize a zero or non-finite vector");
  }
  Vec out(a.begin(), a.end());
  for (double& x : out) x /= n;
  return out;
}

/// Cosine similarity computed from raw norms, so it stays well defined (and
/// differentiable) off the unit sphere. For a == b it returns exactly 1.
inline double cosine(ConstView a, ConstView b) {
  const double ab = dot(a, b);
  const double denom = std::sqrt(dot(a, a) * dot(b, b));
  if (!(denom > 0.0)) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  return ab / denom;
}

/// Accumulates coef * d cos(a,b) / da into grad_a and coef * d cos(a,b) / db
/// into grad_b.
inline void accumulate_cosine_grad(ConstView a, ConstView b, double coef, MutView grad_a,
                                   MutView grad_b) {
  const double aa = dot(a, a);
  const double bb = dot(b, b);
  const double ab = dot(a, b);
  const double na = std::sqrt(aa);
  const double nb = std::sqrt(bb);
  const double cos = ab / (na * nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    grad_a[i] += coef * (b[i] / (na * nb) - cos * a[i] / aa);
    grad_b[i] += coef * (a[i] / (na * nb) - cos * b[i] / bb);
  }
}

inline double mean_squared_error(ConstView a, ConstView b) {
  require_same_dim(a.size(), b.size(), "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

/// grad += coef * d MSE(a, b) / da
inline void accumulate_mse_grad(ConstView a, ConstView b, double coef, MutView grad) {
  const double scale = 2.0 * coef / static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) grad[i] += scale * (a[i] - b[i]);
}

/// y = M x for a row-major rows x cols matrix.
inline void matvec(ConstView m, std::size_t rows, std::size_t cols, ConstView x, MutView y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = m.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

/// y = M^T x for a row-major rows x cols matrix; y has `cols` entries.
inline void matvec_transposed(ConstView m, std::size_t rows, std::size_t cols, ConstView x,
                              MutView y) {
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * x[r];
  }
}

/// Row-major tensor with a gradient buffer of the same size.
struct ParamTensor {
  std::vector<std::size_t> shape;
  Vec values;
  Vec grad;

  ParamTensor() = default;
  explicit ParamTensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                          std::multiplies<>());
    values.assign(n, 0.0);
    grad.assign(n, 0.0);
  }

  std::size_t size() const noexcept { return values.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

/// Central finite differences, one coordinate at a time.
inline Vec finite_diff_grad(const std::function<double(ConstView)>& loss_fn, ConstView params,
                            double h = 1e-4) {
  Vec theta(params.begin(), params.end());
  Vec out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = theta[i];
    theta[i] = orig + h;
    const double up = loss_fn(theta);
    theta[i] = orig - h;
    const double down = loss_fn(theta);
    theta[i] = orig;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

}  // namespace shortlist
