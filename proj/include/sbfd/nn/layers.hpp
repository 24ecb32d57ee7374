#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sbfd/nn/tensor.hpp"

namespace sbfd::nn {

// Train: batch statistics + stochastic dropout. Eval: running statistics, dropout off.
// GradCheck: batch statistics without updating running stats, dropout off (deterministic).
enum class Mode { Train, Eval, GradCheck };

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), trainable(train) {
    if (trainable) {
      grad = Tensor(value.shape());
      adam_m = Tensor(value.shape());
      adam_v = Tensor(value.shape());
    }
  }

  void zero_grad() {
    if (trainable) grad.fill(0.0);
  }
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  // Accumulates parameter gradients and returns the gradient w.r.t. the last forward input.
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }
};

inline std::vector<const Parameter*> as_const(const std::vector<Parameter*>& ps) {
  return {ps.begin(), ps.end()};
}

inline void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.values()) v = dist(rng);
}

// y = x W + b over the last axis.
class Dense : public Layer {
 public:
  Dense(std::size_t in, std::size_t out, const std::string& name, std::mt19937_64& rng)
      : in_(in), out_(out), w_(name + ".weight", Tensor({in, out})), b_(name + ".bias", Tensor({out})) {
    glorot_uniform(w_.value, in, out, rng);
  }

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Parameter& weight() { return w_; }
  Parameter& bias() { return b_; }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() == 0 || x.shape().back() != in_) {
      fail(ErrorKind::ShapeMismatch, "dense expects last dim " + std::to_string(in_) + ", got " + shape_str(x.shape()));
    }
    x_ = x;
    Shape out_shape = x.shape();
    out_shape.back() = out_;
    Tensor y(out_shape);
    auto ym = y.matrix();
    ym.noalias() = x.matrix() * w_.value.matrix();
    ym.rowwise() += b_.value.matrix().row(0);
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    Shape expect = x_.shape();
    expect.back() = out_;
    expect_shape(dy, expect, "dense backward");
    const auto dym = dy.matrix();
    w_.grad.matrix().noalias() += x_.matrix().transpose() * dym;
    b_.grad.matrix().row(0) += dym.colwise().sum();
    Tensor dx(x_.shape());
    dx.matrix().noalias() = dym * w_.value.matrix().transpose();
    return dx;
  }

  std::vector<Parameter*> parameters() override { return {&w_, &b_}; }

 private:
  std::size_t in_, out_;
  Parameter w_, b_;
  Tensor x_;
};

// Valid-padding 1D convolution over (batch, length, channels) input.
// Weight is laid out as (kernel * in_channels, out_channels) so the op is im2col + GEMM.
class Conv1d : public Layer {
 public:
  Conv1d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, const std::string& name, std::mt19937_64& rng)
      : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel),
        w_(name + ".weight", Tensor({kernel * in_ch, out_ch})), b_(name + ".bias", Tensor({out_ch})) {
    glorot_uniform(w_.value, kernel * in_ch, kernel * out_ch, rng);
  }

  static std::size_t output_length(std::size_t len, std::size_t kernel) { return len >= kernel ? len - kernel + 1 : 0; }

  Tensor forward(const Tensor& x, Mode) override {
    expect_rank(x, 3, "conv1d input");
    if (x.dim(2) != in_ch_ || x.dim(1) < kernel_) {
      fail(ErrorKind::ShapeMismatch, "conv1d input " + shape_str(x.shape()) + " incompatible with in_channels " +
                                         std::to_string(in_ch_) + ", kernel " + std::to_string(kernel_));
    }
    in_shape_ = x.shape();
    const std::size_t batch = x.dim(0), len = x.dim(1), lout = output_length(len, kernel_);
    const std::size_t row = kernel_ * in_ch_;
    cols_ = Tensor({batch * lout, row});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < lout; ++t) {
        const double* src = x.ptr() + (b * len + t) * in_ch_;
        std::copy(src, src + row, cols_.ptr() + (b * lout + t) * row);
      }
    }
    Tensor y({batch, lout, out_ch_});
    auto ym = y.matrix();
    ym.noalias() = cols_.matrix() * w_.value.matrix();
    ym.rowwise() += b_.value.matrix().row(0);
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    const std::size_t batch = in_shape_[0], len = in_shape_[1], lout = output_length(len, kernel_);
    expect_shape(dy, {batch, lout, out_ch_}, "conv1d backward");
    const std::size_t row = kernel_ * in_ch_;
    const auto dym = dy.matrix();
    w_.grad.matrix().noalias() += cols_.matrix().transpose() * dym;
    b_.grad.matrix().row(0) += dym.colwise().sum();
    Tensor dcols({batch * lout, row});
    dcols.matrix().noalias() = dym * w_.value.matrix().transpose();
    Tensor dx(in_shape_);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < lout; ++t) {
        const double* src = dcols.ptr() + (b * lout + t) * row;
        double* dst = dx.ptr() + (b * len + t) * in_ch_;
        for (std::size_t j = 0; j < row; ++j) dst[j] += src[j];
      }
    }
    return dx;
  }

  std::vector<Parameter*> parameters() override { return {&w_, &b_}; }

 private:
  std::size_t in_ch_, out_ch_, kernel_;
  Parameter w_, b_;
  Shape in_shape_;
  Tensor cols_;
};

// Non-overlapping max pooling along the length axis; trailing remainder is dropped.
class MaxPool1d : public Layer {
 public:
  explicit MaxPool1d(std::size_t pool = 2) : pool_(pool) {}

  Tensor forward(const Tensor& x, Mode) override {
    expect_rank(x, 3, "maxpool1d input");
    in_shape_ = x.shape();
    const std::size_t batch = x.dim(0), len = x.dim(1), ch = x.dim(2), lout = len / pool_;
    Tensor y({batch, lout, ch});
    argmax_.assign(y.size(), 0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < lout; ++t) {
        for (std::size_t c = 0; c < ch; ++c) {
          std::size_t best = (b * len + t * pool_) * ch + c;
          for (std::size_t k = 1; k < pool_; ++k) {
            const std::size_t idx = (b * len + t * pool_ + k) * ch + c;
            if (x[idx] > x[best]) best = idx;
          }
          const std::size_t o = (b * lout + t) * ch + c;
          y[o] = x[best];
          argmax_[o] = best;
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    if (dy.size() != argmax_.size()) fail(ErrorKind::ShapeMismatch, "maxpool1d backward " + shape_str(dy.shape()));
    Tensor dx(in_shape_);
    for (std::size_t o = 0; o < argmax_.size(); ++o) dx[argmax_[o]] += dy[o];
    return dx;
  }

 private:
  std::size_t pool_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

// Per-channel normalization over every leading axis (batch and, for sequences, time).
class BatchNorm1d : public Layer {
 public:
  BatchNorm1d(std::size_t channels, const std::string& name, double momentum = 0.99, double eps = 1e-5)
      : ch_(channels), momentum_(momentum), eps_(eps),
        gamma_(name + ".gamma", Tensor({channels}, 1.0)), beta_(name + ".beta", Tensor({channels})),
        running_mean_(name + ".running_mean", Tensor({channels}), false),
        running_var_(name + ".running_var", Tensor({channels}, 1.0), false) {}

  Tensor forward(const Tensor& x, Mode mode) override {
    if (x.rank() < 2 || x.shape().back() != ch_) fail(ErrorKind::ShapeMismatch, "batchnorm input " + shape_str(x.shape()));
    const auto xm = x.matrix();
    const auto n = static_cast<double>(xm.rows());
    Tensor y(x.shape());
    auto ym = y.matrix();
    if (mode == Mode::Eval) {
      for (std::size_t c = 0; c < ch_; ++c) {
        const double scale = gamma_.value[c] / std::sqrt(running_var_.value[c] + eps_);
        ym.col(c) = (xm.col(c).array() - running_mean_.value[c]) * scale + beta_.value[c];
      }
      return y;
    }
    xhat_ = Tensor(x.shape());
    auto xh = xhat_.matrix();
    inv_std_.assign(ch_, 0.0);
    for (std::size_t c = 0; c < ch_; ++c) {
      const double mean = xm.col(c).mean();
      const double var = (xm.col(c).array() - mean).square().sum() / n;
      inv_std_[c] = 1.0 / std::sqrt(var + eps_);
      xh.col(c) = (xm.col(c).array() - mean) * inv_std_[c];
      ym.col(c) = xh.col(c).array() * gamma_.value[c] + beta_.value[c];
      if (mode == Mode::Train) {
        running_mean_.value[c] = momentum_ * running_mean_.value[c] + (1.0 - momentum_) * mean;
        running_var_.value[c] = momentum_ * running_var_.value[c] + (1.0 - momentum_) * var;
      }
    }
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    expect_shape(dy, xhat_.shape(), "batchnorm backward");
    const auto dym = dy.matrix();
    const auto xh = xhat_.matrix();
    const auto n = static_cast<double>(dym.rows());
    Tensor dx(dy.shape());
    auto dxm = dx.matrix();
    for (std::size_t c = 0; c < ch_; ++c) {
      const double sum_dy = dym.col(c).sum();
      const double sum_dy_xh = dym.col(c).dot(xh.col(c));
      gamma_.grad[c] += sum_dy_xh;
      beta_.grad[c] += sum_dy;
      const double k = gamma_.value[c] * inv_std_[c] / n;
      dxm.col(c) = k * (n * dym.col(c).array() - sum_dy - xh.col(c).array() * sum_dy_xh);
    }
    return dx;
  }

  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_, &running_mean_, &running_var_}; }

 private:
  std::size_t ch_;
  double momentum_, eps_;
  Parameter gamma_, beta_, running_mean_, running_var_;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

// Inverted dropout: survivors are scaled by 1/(1-rate) at train time, eval is the identity.
class Dropout : public Layer {
 public:
  Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
    require(rate >= 0.0 && rate < 1.0, ErrorKind::InvalidArgument, "dropout rate must be in [0,1)");
  }

  void reseed(std::uint64_t seed) { rng_.seed(seed); }

  Tensor forward(const Tensor& x, Mode mode) override {
    active_ = mode == Mode::Train && rate_ > 0.0;
    if (!active_) return x;
    mask_ = Tensor(x.shape());
    std::bernoulli_distribution keep(1.0 - rate_);
    const double scale = 1.0 / (1.0 - rate_);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      mask_[i] = keep(rng_) ? scale : 0.0;
      y[i] = x[i] * mask_[i];
    }
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    if (!active_) return dy;
    expect_shape(dy, mask_.shape(), "dropout backward");
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask_[i];
    return dx;
  }

 private:
  double rate_;
  std::mt19937_64 rng_;
  bool active_ = false;
  Tensor mask_;
};

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

enum class Activation { Tanh, Sigmoid, Relu };

class Elementwise : public Layer {
 public:
  explicit Elementwise(Activation kind) : kind_(kind) {}

  Tensor forward(const Tensor& x, Mode) override {
    x_ = x;
    y_ = Tensor(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      switch (kind_) {
        case Activation::Tanh: y_[i] = std::tanh(x[i]); break;
        case Activation::Sigmoid: y_[i] = sigmoid(x[i]); break;
        case Activation::Relu: y_[i] = x[i] > 0.0 ? x[i] : 0.0; break;
      }
    }
    return y_;
  }

  Tensor backward(const Tensor& dy) override {
    expect_shape(dy, y_.shape(), "activation backward");
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) {
      switch (kind_) {
        case Activation::Tanh: dx[i] = dy[i] * (1.0 - y_[i] * y_[i]); break;
        case Activation::Sigmoid: dx[i] = dy[i] * y_[i] * (1.0 - y_[i]); break;
        case Activation::Relu: dx[i] = x_[i] > 0.0 ? dy[i] : 0.0; break;
      }
    }
    return dx;
  }

 private:
  Activation kind_;
  Tensor x_, y_;
};

// Keeps the batch axis, reshapes the rest.
class Reshape : public Layer {
 public:
  explicit Reshape(Shape per_sample) : per_sample_(std::move(per_sample)) {}

  Tensor forward(const Tensor& x, Mode) override {
    in_shape_ = x.shape();
    Shape s{x.dim(0)};
    s.insert(s.end(), per_sample_.begin(), per_sample_.end());
    return x.reshaped(std::move(s));
  }

  Tensor backward(const Tensor& dy) override { return dy.reshaped(in_shape_); }

 private:
  Shape per_sample_;
  Shape in_shape_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor forward(const Tensor& x, Mode mode) override {
    Tensor h = x;
    for (auto& l : layers_) h = l->forward(h, mode);
    return h;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  std::vector<Parameter*> parameters() override {
    std::vector<Parameter*> out;
    for (auto& l : layers_) {
      auto ps = l->parameters();
      out.insert(out.end(), ps.begin(), ps.end());
    }
    return out;
  }

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace sbfd::nn
