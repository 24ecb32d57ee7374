#pragma once

#include <random>
#include <string>
#include <vector>

#include "sbfd/nn/layers.hpp"

namespace sbfd::nn {

// Unidirectional LSTM over (batch, time, features) that returns the final hidden state (batch, hidden).
// Gate blocks in the fused weight columns are ordered input, forget, candidate, output.
class Lstm : public Layer {
 public:
  Lstm(std::size_t input, std::size_t hidden, bool reverse, const std::string& name, std::mt19937_64& rng)
      : in_(input), hid_(hidden), reverse_(reverse),
        wx_(name + ".weight_ih", Tensor({input, 4 * hidden})),
        wh_(name + ".weight_hh", Tensor({hidden, 4 * hidden})),
        b_(name + ".bias", Tensor({4 * hidden})) {
    glorot_uniform(wx_.value, input, 4 * hidden, rng);
    glorot_uniform(wh_.value, hidden, 4 * hidden, rng);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) b_.value[j] = 1.0;
  }

  std::size_t hidden_size() const { return hid_; }
  Parameter& weight_ih() { return wx_; }
  Parameter& weight_hh() { return wh_; }
  Parameter& bias() { return b_; }

  // Single step on explicit state; exposed for tests of the cell equations.
  void cell(const RowMat& x_t, const RowMat& h_prev, const RowMat& c_prev, RowMat& h, RowMat& c) const {
    RowMat z = x_t * wx_.value.matrix() + h_prev * wh_.value.matrix();
    z.rowwise() += b_.value.matrix().row(0);
    RowMat gates;
    activate(z, gates);
    const auto H = static_cast<Eigen::Index>(hid_);
    c = gates.middleCols(H, H).cwiseProduct(c_prev) + gates.leftCols(H).cwiseProduct(gates.middleCols(2 * H, H));
    h = gates.rightCols(H).cwiseProduct(c.array().tanh().matrix());
  }

  Tensor forward(const Tensor& x, Mode) override {
    expect_rank(x, 3, "lstm input");
    if (x.dim(2) != in_ || x.dim(1) == 0) fail(ErrorKind::ShapeMismatch, "lstm input " + shape_str(x.shape()));
    x_ = x;
    batch_ = x.dim(0);
    steps_ = x.dim(1);
    const auto B = static_cast<Eigen::Index>(batch_);
    const auto H = static_cast<Eigen::Index>(hid_);

    // Input projection for every time step at once: rows are (b, t).
    RowMat xz = x.matrix() * wx_.value.matrix();
    xz.rowwise() += b_.value.matrix().row(0);

    gates_.assign(steps_, RowMat());
    cs_.assign(steps_ + 1, RowMat::Zero(B, H));
    hs_.assign(steps_ + 1, RowMat::Zero(B, H));
    RowMat z(B, 4 * H);
    for (std::size_t k = 0; k < steps_; ++k) {
      const std::size_t t = time_index(k);
      for (Eigen::Index b = 0; b < B; ++b) z.row(b) = xz.row(b * static_cast<Eigen::Index>(steps_) + static_cast<Eigen::Index>(t));
      z.noalias() += hs_[k] * wh_.value.matrix();
      activate(z, gates_[k]);
      const RowMat& g = gates_[k];
      cs_[k + 1] = g.middleCols(H, H).cwiseProduct(cs_[k]) + g.leftCols(H).cwiseProduct(g.middleCols(2 * H, H));
      hs_[k + 1] = g.rightCols(H).cwiseProduct(cs_[k + 1].array().tanh().matrix());
    }
    Tensor y({batch_, hid_});
    y.matrix() = hs_[steps_];
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    expect_shape(dy, {batch_, hid_}, "lstm backward");
    const auto B = static_cast<Eigen::Index>(batch_);
    const auto H = static_cast<Eigen::Index>(hid_);
    const auto T = static_cast<Eigen::Index>(steps_);

    RowMat dh = dy.matrix();
    RowMat dc = RowMat::Zero(B, H);
    RowMat dz_all(B * T, 4 * H);
    RowMat dz(B, 4 * H);
    auto& dwh = wh_.grad;
    for (std::size_t kk = steps_; kk-- > 0;) {
      const RowMat& g = gates_[kk];
      const auto i = g.leftCols(H).array();
      const auto f = g.middleCols(H, H).array();
      const auto cand = g.middleCols(2 * H, H).array();
      const auto o = g.rightCols(H).array();
      const Eigen::ArrayXXd tc = cs_[kk + 1].array().tanh();
      dc.array() += dh.array() * o * (1.0 - tc.square());
      dz.leftCols(H) = (dc.array() * cand * i * (1.0 - i)).matrix();
      dz.middleCols(H, H) = (dc.array() * cs_[kk].array() * f * (1.0 - f)).matrix();
      dz.middleCols(2 * H, H) = (dc.array() * i * (1.0 - cand.square())).matrix();
      dz.rightCols(H) = (dh.array() * tc * o * (1.0 - o)).matrix();
      dc.array() *= f;
      dwh.matrix().noalias() += hs_[kk].transpose() * dz;
      dh.noalias() = dz * wh_.value.matrix().transpose();
      const auto t = static_cast<Eigen::Index>(time_index(kk));
      for (Eigen::Index b = 0; b < B; ++b) dz_all.row(b * T + t) = dz.row(b);
    }
    wx_.grad.matrix().noalias() += x_.matrix().transpose() * dz_all;
    b_.grad.matrix().row(0) += dz_all.colwise().sum();
    Tensor dx(x_.shape());
    dx.matrix().noalias() = dz_all * wx_.value.matrix().transpose();
    return dx;
  }

  std::vector<Parameter*> parameters() override { return {&wx_, &wh_, &b_}; }

 private:
  std::size_t time_index(std::size_t k) const { return reverse_ ? steps_ - 1 - k : k; }

  void activate(const RowMat& z, RowMat& gates) const {
    const auto H = static_cast<Eigen::Index>(hid_);
    gates.resize(z.rows(), z.cols());
    gates.leftCols(2 * H) = (1.0 / (1.0 + (-z.leftCols(2 * H).array()).exp())).matrix();
    gates.middleCols(2 * H, H) = z.middleCols(2 * H, H).array().tanh().matrix();
    gates.rightCols(H) = (1.0 / (1.0 + (-z.rightCols(H).array()).exp())).matrix();
  }

  std::size_t in_, hid_;
  bool reverse_;
  Parameter wx_, wh_, b_;
  Tensor x_;
  std::size_t batch_ = 0, steps_ = 0;
  std::vector<RowMat> gates_, cs_, hs_;
};

// Forward final hidden state concatenated with the backward pass's final hidden state (batch, 2*hidden).
class BiLstm : public Layer {
 public:
  BiLstm(std::size_t input, std::size_t hidden, const std::string& name, std::mt19937_64& rng)
      : fwd_(input, hidden, false, name + ".fwd", rng), bwd_(input, hidden, true, name + ".bwd", rng) {}

  Lstm& forward_lstm() { return fwd_; }
  Lstm& backward_lstm() { return bwd_; }

  Tensor forward(const Tensor& x, Mode mode) override {
    const Tensor hf = fwd_.forward(x, mode);
    const Tensor hb = bwd_.forward(x, mode);
    const std::size_t B = hf.dim(0), H = hf.dim(1);
    Tensor y({B, 2 * H});
    auto ym = y.matrix();
    ym.leftCols(static_cast<Eigen::Index>(H)) = hf.matrix();
    ym.rightCols(static_cast<Eigen::Index>(H)) = hb.matrix();
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    const std::size_t H = fwd_.hidden_size();
    if (dy.rank() != 2 || dy.dim(1) != 2 * H) fail(ErrorKind::ShapeMismatch, "bilstm backward " + shape_str(dy.shape()));
    const std::size_t B = dy.dim(0);
    Tensor df({B, H}), db({B, H});
    df.matrix() = dy.matrix().leftCols(static_cast<Eigen::Index>(H));
    db.matrix() = dy.matrix().rightCols(static_cast<Eigen::Index>(H));
    Tensor dx = fwd_.backward(df);
    const Tensor dxb = bwd_.backward(db);
    dx.matrix() += dxb.matrix();
    return dx;
  }

  std::vector<Parameter*> parameters() override {
    auto ps = fwd_.parameters();
    auto pb = bwd_.parameters();
    ps.insert(ps.end(), pb.begin(), pb.end());
    return ps;
  }

 private:
  Lstm fwd_, bwd_;
};

}  // namespace sbfd::nn
