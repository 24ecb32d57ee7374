#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "sbfd/nn/layers.hpp"

namespace sbfd::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    require(learning_rate > 0.0, ErrorKind::InvalidConfig, "adam learning_rate must be > 0");
    require(beta1 >= 0.0 && beta1 < 1.0, ErrorKind::InvalidConfig, "adam beta1 must be in [0,1)");
    require(beta2 >= 0.0 && beta2 < 1.0, ErrorKind::InvalidConfig, "adam beta2 must be in [0,1)");
    require(epsilon > 0.0, ErrorKind::InvalidConfig, "adam epsilon must be > 0");
  }
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return step_; }

  // Bias-corrected update in place; non-trainable parameters (running stats) are skipped.
  void step(std::span<Parameter* const> params) {
    for (const Parameter* p : params) {
      if (p->trainable && p->grad.shape() != p->value.shape()) {
        fail(ErrorKind::UninitializedGradient, "parameter '" + p->name + "' has no gradient buffer");
      }
    }
    ++step_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (Parameter* p : params) {
      if (!p->trainable) continue;
      double* w = p->value.ptr();
      double* m = p->adam_m.ptr();
      double* v = p->adam_v.ptr();
      const double* g = p->grad.ptr();
      for (std::size_t i = 0, n = p->value.size(); i < n; ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        w[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::int64_t step_ = 0;
};

}  // namespace sbfd::nn
