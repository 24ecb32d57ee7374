#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sbfd/nn/layers.hpp"

namespace sbfd::nn {

struct GradCheckOptions {
  double epsilon = 1e-5;
  // 0 checks every coordinate; otherwise a seeded random subset of each tensor.
  std::size_t max_coords_per_tensor = 0;
  // Denominator floor so vanishing gradients compare absolutely.
  double floor = 1e-6;
  std::uint64_t seed = 17;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t coords_checked = 0;
};

struct GradTarget {
  std::string name;
  Tensor* value;   // perturbed in place, restored afterwards
  Tensor analytic; // gradient of loss() w.r.t. *value
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central-difference comparison of analytic gradients for an arbitrary scalar loss.
inline GradCheckReport finite_difference_check(const std::function<double()>& loss, std::vector<GradTarget>& targets,
                                               const GradCheckOptions& opts = {}) {
  GradCheckReport rep;
  std::mt19937_64 rng(opts.seed);
  for (auto& t : targets) {
    std::vector<std::size_t> coords(t.value->size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_tensor && coords.size() > opts.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      double& v = (*t.value)[i];
      const double orig = v;
      v = orig + opts.epsilon;
      const double up = loss();
      v = orig - opts.epsilon;
      const double down = loss();
      v = orig;
      const double numeric = (up - down) / (2.0 * opts.epsilon);
      const double err = relative_error(t.analytic[i], numeric, opts.floor);
      ++rep.coords_checked;
      if (err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst = t.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

// Checks every parameter and input gradient of a layer under loss = sum(w * layer(x)) with random w.
// Runs in GradCheck mode: batch statistics, no dropout, running stats untouched.
inline GradCheckReport grad_check(Layer& layer, Tensor input, std::mt19937_64& rng, const GradCheckOptions& opts = {}) {
  layer.zero_grad();
  const Tensor y = layer.forward(input, Mode::GradCheck);
  Tensor w(y.shape());
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& v : w.values()) v = nd(rng);
  const Tensor dx = layer.backward(w);

  std::vector<GradTarget> targets;
  for (auto* p : layer.parameters()) {
    if (p->trainable) targets.push_back({p->name, &p->value, p->grad});
  }
  targets.push_back({"input", &input, dx});

  auto loss = [&]() {
    const Tensor out = layer.forward(input, Mode::GradCheck);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += w[i] * out[i];
    return s;
  };
  return finite_difference_check(loss, targets, opts);
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> nd(0.0, scale);
  for (auto& v : t.values()) v = nd(rng);
  return t;
}

}  // namespace sbfd::nn
