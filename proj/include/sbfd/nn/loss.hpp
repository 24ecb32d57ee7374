#pragma once

#include <cmath>

#include "sbfd/nn/tensor.hpp"

namespace sbfd::nn {

struct LossResult {
  double value = 0.0;
  Tensor grad;  // d(value)/d(pred)
};

namespace detail {
inline void check_same(const Tensor& pred, const Tensor& target, const char* what) {
  if (pred.shape() != target.shape()) {
    fail(ErrorKind::ShapeMismatch, std::string(what) + ": pred " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
  }
}
}  // namespace detail

// Mean-reduced Huber: 0.5 e^2 for |e| <= delta, delta (|e| - delta/2) beyond.
inline LossResult huber(const Tensor& pred, const Tensor& target, double delta = 1.0) {
  detail::check_same(pred, target, "huber");
  LossResult r{0.0, Tensor(pred.shape())};
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    if (std::abs(e) <= delta) {
      r.value += 0.5 * e * e;
      r.grad[i] = e / n;
    } else {
      r.value += delta * (std::abs(e) - 0.5 * delta);
      r.grad[i] = (e > 0 ? delta : -delta) / n;
    }
  }
  r.value /= n;
  return r;
}

inline LossResult mse(const Tensor& pred, const Tensor& target) {
  detail::check_same(pred, target, "mse");
  LossResult r{0.0, Tensor(pred.shape())};
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    r.value += e * e;
    r.grad[i] = 2.0 * e / n;
  }
  r.value /= n;
  return r;
}

inline double mae_metric(const Tensor& pred, const Tensor& target) {
  detail::check_same(pred, target, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return pred.empty() ? 0.0 : s / static_cast<double>(pred.size());
}

}  // namespace sbfd::nn
