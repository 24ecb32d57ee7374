#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "sbfd/nn/adam.hpp"
#include "sbfd/nn/checkpoint.hpp"
#include "sbfd/nn/layers.hpp"
#include "sbfd/nn/loss.hpp"
#include "sbfd/nn/lstm.hpp"
#include "sbfd/traffic.hpp"

namespace sbfd::forecast {

using nn::Mode;
using nn::Tensor;
using traffic::kDl;
using traffic::kUl;

struct ForecastArch {
  std::size_t lookback = 30;
  std::size_t horizon = 10;
  std::size_t features = 2;
  std::size_t filters = 64;
  std::size_t kernel = 3;
  std::size_t pool = 2;
  std::size_t hidden = 128;
  double dropout_conv = 0.20;
  double dropout_lstm = 0.30;

  std::size_t conv_length() const { return lookback - kernel + 1; }
  std::size_t pooled_length() const { return conv_length() / pool; }

  // Trainable parameters only (batch-norm running statistics excluded).
  std::size_t parameter_count() const {
    const std::size_t conv = kernel * features * filters + filters;
    const std::size_t bn = 2 * filters;
    const std::size_t lstm = 2 * (4 * hidden * (filters + hidden) + 4 * hidden);
    const std::size_t out = horizon * features;
    const std::size_t dense = 2 * hidden * out + out;
    return conv + bn + lstm + dense;
  }
};

// conv1d -> batchnorm -> maxpool -> dropout -> BiLSTM -> dropout -> dense -> reshape(horizon x features)
class ForecastModel : public nn::Layer {
 public:
  explicit ForecastModel(std::uint64_t seed = 0, ForecastArch arch = {}) : ForecastModel(arch, seed, std::mt19937_64(seed)) {}

  const ForecastArch& arch() const { return arch_; }
  traffic::Normalizer normalizer;

  Tensor forward(const Tensor& x, Mode mode) override {
    const std::size_t B = x.rank() == 3 ? x.dim(0) : 0;
    nn::expect_shape(x, {B, arch_.lookback, arch_.features}, "forecaster input");
    Tensor h = conv_.forward(x, mode);
    nn::expect_shape(h, {B, arch_.conv_length(), arch_.filters}, "conv output");
    h = bn_.forward(h, mode);
    h = pool_.forward(h, mode);
    nn::expect_shape(h, {B, arch_.pooled_length(), arch_.filters}, "pool output");
    h = drop_conv_.forward(h, mode);
    h = lstm_.forward(h, mode);
    nn::expect_shape(h, {B, 2 * arch_.hidden}, "bilstm output");
    h = drop_lstm_.forward(h, mode);
    h = dense_.forward(h, mode);
    nn::expect_shape(h, {B, arch_.horizon * arch_.features}, "dense output");
    return h.reshaped({B, arch_.horizon, arch_.features});
  }

  Tensor backward(const Tensor& dy) override {
    Tensor g = dy.reshaped({dy.dim(0), arch_.horizon * arch_.features});
    g = dense_.backward(g);
    g = drop_lstm_.backward(g);
    g = lstm_.backward(g);
    g = drop_conv_.backward(g);
    g = pool_.backward(g);
    g = bn_.backward(g);
    return conv_.backward(g);
  }

  std::vector<nn::Parameter*> parameters() override {
    std::vector<nn::Parameter*> out;
    for (nn::Layer* l : std::initializer_list<nn::Layer*>{&conv_, &bn_, &lstm_, &dense_}) {
      auto ps = l->parameters();
      out.insert(out.end(), ps.begin(), ps.end());
    }
    return out;
  }

  std::size_t trainable_parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->trainable ? p->value.size() : 0;
    return n;
  }

  void reseed_dropout(std::uint64_t seed) {
    drop_conv_.reseed(seed ^ 0x9e3779b97f4a7c15ULL);
    drop_lstm_.reseed(seed ^ 0xc2b2ae3d27d4eb4fULL);
  }

 private:
  ForecastModel(ForecastArch arch, std::uint64_t seed, std::mt19937_64&& rng)
      : arch_(arch),
        conv_(arch.features, arch.filters, arch.kernel, "conv1", rng),
        bn_(arch.filters, "bn1"),
        pool_(arch.pool),
        drop_conv_(arch.dropout_conv, seed ^ 0x9e3779b97f4a7c15ULL),
        lstm_(arch.filters, arch.hidden, "bilstm", rng),
        drop_lstm_(arch.dropout_lstm, seed ^ 0xc2b2ae3d27d4eb4fULL),
        dense_(2 * arch.hidden, arch.horizon * arch.features, "dense", rng) {
    if (arch.lookback < arch.kernel || arch.pooled_length() == 0) {
      fail(ErrorKind::InvalidConfig, "lookback too short for the convolution/pooling stack");
    }
    if (trainable_parameter_count() != arch_.parameter_count()) {
      fail(ErrorKind::ShapeMismatch, "forecaster parameter count does not match its architecture");
    }
  }

  ForecastArch arch_;
  nn::Conv1d conv_;
  nn::BatchNorm1d bn_;
  nn::MaxPool1d pool_;
  nn::Dropout drop_conv_;
  nn::BiLstm lstm_;
  nn::Dropout drop_lstm_;
  nn::Dense dense_;
};

inline ForecastModel build_model(std::uint64_t seed, ForecastArch arch = {}) { return ForecastModel(seed, arch); }

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  std::size_t patience = 4;
  bool checkpoint_best = true;
  double huber_delta = 1.0;
  nn::AdamConfig adam;
  std::uint64_t seed = 0;

  void validate() const {
    require(epochs >= 1, ErrorKind::InvalidConfig, "epochs must be >= 1");
    require(batch_size >= 1, ErrorKind::InvalidConfig, "batch_size must be >= 1");
    require(huber_delta > 0.0, ErrorKind::InvalidConfig, "huber_delta must be > 0");
    adam.validate();
  }
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_mae;  // normalized units
  std::size_t best_epoch = 0;   // 0-based
  bool stopped_early = false;

  std::size_t epochs_run() const { return val_loss.size(); }
};

namespace detail {

inline Tensor gather_inputs(const traffic::WindowedDataset& ds, std::span<const std::size_t> idx) {
  const std::size_t per = ds.lookback * 2;
  Tensor x({idx.size(), ds.lookback, 2});
  for (std::size_t k = 0; k < idx.size(); ++k) std::copy_n(ds.input(idx[k]), per, x.ptr() + k * per);
  return x;
}

inline Tensor gather_targets(const traffic::WindowedDataset& ds, std::span<const std::size_t> idx) {
  const std::size_t per = ds.horizon * 2;
  Tensor y({idx.size(), ds.horizon, 2});
  for (std::size_t k = 0; k < idx.size(); ++k) std::copy_n(ds.target(idx[k]), per, y.ptr() + k * per);
  return y;
}

struct EvalLoss {
  double huber = 0.0;
  double mae = 0.0;
};

inline EvalLoss evaluate_loss(ForecastModel& model, const traffic::WindowedDataset& ds, traffic::IndexRange range,
                              double delta, std::size_t batch = 256) {
  EvalLoss out;
  std::vector<std::size_t> idx;
  double n = 0.0;
  for (std::size_t b = range.begin; b < range.end; b += batch) {
    idx.resize(std::min(batch, range.end - b));
    std::iota(idx.begin(), idx.end(), b);
    const Tensor x = gather_inputs(ds, idx);
    const Tensor y = gather_targets(ds, idx);
    const Tensor p = model.forward(x, Mode::Eval);
    const double cnt = static_cast<double>(p.size());
    out.huber += nn::huber(p, y, delta).value * cnt;
    out.mae += nn::mae_metric(p, y) * cnt;
    n += cnt;
  }
  out.huber /= n;
  out.mae /= n;
  return out;
}

}  // namespace detail

using EpochCallback = std::function<void(std::size_t epoch, const TrainHistory&)>;

// Seeded per-epoch shuffle, last partial batch kept, eval-mode validation after each epoch,
// best-validation snapshot restored at the end. Keras-style patience: stop once `patience`
// consecutive epochs fail to improve.
inline TrainHistory train(ForecastModel& model, const traffic::WindowedDataset& ds, const TrainConfig& cfg,
                          const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require(!ds.partition.train.empty(), ErrorKind::EmptyPartition, "training partition is empty");
  require(!ds.partition.val.empty(), ErrorKind::EmptyPartition, "validation partition is empty");
  require(ds.lookback == model.arch().lookback && ds.horizon == model.arch().horizon, ErrorKind::ShapeMismatch,
          "dataset window shape does not match the model");

  std::mt19937_64 rng(cfg.seed);
  model.reseed_dropout(cfg.seed + 1);
  nn::Adam adam(cfg.adam);
  auto params = model.parameters();
  TrainHistory hist;
  std::vector<nn::NamedTensor> best;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t wait = 0;

  std::vector<std::size_t> order(ds.partition.train.size());
  std::iota(order.begin(), order.end(), ds.partition.train.begin);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(cfg.batch_size, order.size() - b));
      const Tensor x = detail::gather_inputs(ds, idx);
      const Tensor y = detail::gather_targets(ds, idx);
      model.zero_grad();
      const Tensor p = model.forward(x, Mode::Train);
      const auto loss = nn::huber(p, y, cfg.huber_delta);
      model.backward(loss.grad);
      adam.step(params);
      loss_sum += loss.value;
      ++batches;
    }
    const auto val = detail::evaluate_loss(model, ds, ds.partition.val, cfg.huber_delta);
    hist.train_loss.push_back(loss_sum / static_cast<double>(batches));
    hist.val_loss.push_back(val.huber);
    hist.val_mae.push_back(val.mae);
    if (val.huber < best_val) {
      best_val = val.huber;
      hist.best_epoch = epoch;
      wait = 0;
      if (cfg.checkpoint_best) best = nn::snapshot(params);
    } else {
      ++wait;
    }
    if (on_epoch) on_epoch(epoch, hist);
    if (wait > 0 && wait >= cfg.patience) {
      hist.stopped_early = epoch + 1 < cfg.epochs;
      break;
    }
  }
  if (cfg.checkpoint_best && !best.empty()) nn::restore(params, best);
  return hist;
}

// One 10x2 normalized forecast from a 30x2 normalized history (column 0 = UL, 1 = DL).
inline Tensor predict_window(ForecastModel& model, std::span<const double> history) {
  const auto& a = model.arch();
  if (history.size() != a.lookback * a.features) {
    fail(ErrorKind::ShapeMismatch, "history must hold " + std::to_string(a.lookback * a.features) + " values, got " +
                                       std::to_string(history.size()));
  }
  Tensor x({1, a.lookback, a.features}, std::vector<double>(history.begin(), history.end()));
  return model.forward(x, Mode::Eval).reshaped({a.horizon, a.features});
}

inline Tensor predict_batch(ForecastModel& model, const Tensor& histories) { return model.forward(histories, Mode::Eval); }

// Normalized history for the window whose first predicted slot is `t`.
inline std::vector<double> normalized_history(const traffic::TrafficTrace& tr, const traffic::Normalizer& norm, std::size_t t,
                                              std::size_t lookback) {
  std::vector<double> h(lookback * 2);
  for (std::size_t k = 0; k < lookback; ++k) {
    h[2 * k] = norm.apply(static_cast<double>(tr[t - lookback + k].ul), kUl);
    h[2 * k + 1] = norm.apply(static_cast<double>(tr[t - lookback + k].dl), kDl);
  }
  return h;
}

struct SlotForecast {
  std::size_t slot = 0;
  double ul_bits = 0.0;
  double dl_bits = 0.0;
};

// Each window is conditioned on ground-truth history (or on its own earlier predictions when
// `autoregressive`), predicts `horizon` slots, then advances by `horizon`.
inline std::vector<SlotForecast> stitched_forecast(ForecastModel& model, const traffic::TrafficTrace& tr,
                                                   const traffic::Normalizer& norm, std::size_t start_slot, std::size_t n_slots,
                                                   bool autoregressive = false) {
  const auto& a = model.arch();
  require(n_slots > 0 && n_slots % a.horizon == 0, ErrorKind::NotMultipleOfHorizon,
          "n_slots " + std::to_string(n_slots) + " is not a positive multiple of " + std::to_string(a.horizon));
  require(start_slot >= a.lookback, ErrorKind::InsufficientHistory,
          "start slot " + std::to_string(start_slot) + " has fewer than " + std::to_string(a.lookback) + " history slots");
  require(start_slot + n_slots <= tr.size(), ErrorKind::InsufficientHistory, "trace ends before start_slot + n_slots");

  std::vector<double> series;  // normalized, with predictions spliced in for autoregressive mode
  if (autoregressive) {
    series.resize((start_slot + n_slots) * 2);
    for (std::size_t t = start_slot - a.lookback; t < start_slot; ++t) {
      series[2 * t] = norm.apply(static_cast<double>(tr[t].ul), kUl);
      series[2 * t + 1] = norm.apply(static_cast<double>(tr[t].dl), kDl);
    }
  }
  std::vector<SlotForecast> out;
  out.reserve(n_slots);
  for (std::size_t t = start_slot; t < start_slot + n_slots; t += a.horizon) {
    std::vector<double> hist;
    if (autoregressive) {
      hist.assign(series.begin() + static_cast<std::ptrdiff_t>(2 * (t - a.lookback)), series.begin() + static_cast<std::ptrdiff_t>(2 * t));
    } else {
      hist = normalized_history(tr, norm, t, a.lookback);
    }
    const Tensor p = predict_window(model, hist);
    for (std::size_t k = 0; k < a.horizon; ++k) {
      out.push_back({t + k, norm.invert(p[2 * k], kUl), norm.invert(p[2 * k + 1], kDl)});
      if (autoregressive) {
        series[2 * (t + k)] = p[2 * k];
        series[2 * (t + k) + 1] = p[2 * k + 1];
      }
    }
  }
  return out;
}

struct MaeReport {
  double ul_bits = 0.0;
  double dl_bits = 0.0;
  double ul_pct = 0.0;  // of link capacity
  double dl_pct = 0.0;
};

// history (lookback*2 normalized) -> forecast (horizon*2 normalized)
using WindowPredictor = std::function<void(std::span<const double>, std::span<double>)>;

inline MaeReport evaluate_mae(const WindowPredictor& predict, const traffic::WindowedDataset& ds, const traffic::Normalizer& norm,
                              double capacity = 100'000.0) {
  const auto range = ds.partition.test;
  require(!range.empty(), ErrorKind::EmptyPartition, "test partition is empty");
  std::vector<double> pred(ds.horizon * 2);
  double s_ul = 0.0, s_dl = 0.0;
  for (std::size_t i = range.begin; i < range.end; ++i) {
    predict(std::span<const double>(ds.input(i), ds.lookback * 2), pred);
    const double* tgt = ds.target(i);
    for (std::size_t k = 0; k < ds.horizon; ++k) {
      s_ul += std::abs(norm.invert(pred[2 * k], kUl) - norm.invert(tgt[2 * k], kUl));
      s_dl += std::abs(norm.invert(pred[2 * k + 1], kDl) - norm.invert(tgt[2 * k + 1], kDl));
    }
  }
  const double n = static_cast<double>(range.size() * ds.horizon);
  MaeReport r;
  r.ul_bits = s_ul / n;
  r.dl_bits = s_dl / n;
  r.ul_pct = 100.0 * r.ul_bits / capacity;
  r.dl_pct = 100.0 * r.dl_bits / capacity;
  return r;
}

inline WindowPredictor model_predictor(ForecastModel& model) {
  return [&model](std::span<const double> history, std::span<double> out) {
    const Tensor p = predict_window(model, history);
    std::copy(p.values().begin(), p.values().end(), out.begin());
  };
}

inline MaeReport evaluate_mae(ForecastModel& model, const traffic::WindowedDataset& ds, const traffic::Normalizer& norm,
                              double capacity = 100'000.0) {
  return evaluate_mae(model_predictor(model), ds, norm, capacity);
}

// Per-slot forecasts precomputed in batches: entry for slot t is the normalized horizon x 2
// prediction for [t, t+horizon) from true history [t-lookback, t-1].
class ForecastTable {
 public:
  ForecastTable() = default;

  ForecastTable(ForecastModel& model, const traffic::TrafficTrace& tr, std::size_t first, std::size_t last,
                std::size_t batch = 256)
      : first_(first), horizon_(model.arch().horizon) {
    const auto& a = model.arch();
    require(first >= a.lookback, ErrorKind::InsufficientHistory, "forecast table starts before lookback history");
    require(last < tr.size() + 1 && first <= last, ErrorKind::InsufficientTrace, "forecast table range outside trace");
    const auto& norm = model.normalizer;
    const std::size_t n = last - first + 1;
    values_.resize(n * 2 * horizon_);
    for (std::size_t b = 0; b < n; b += batch) {
      const std::size_t m = std::min(batch, n - b);
      Tensor x({m, a.lookback, 2});
      for (std::size_t k = 0; k < m; ++k) {
        const auto h = normalized_history(tr, norm, first + b + k, a.lookback);
        std::copy(h.begin(), h.end(), x.ptr() + k * a.lookback * 2);
      }
      const Tensor p = predict_batch(model, x);
      for (std::size_t k = 0; k < m; ++k) {
        std::copy_n(p.ptr() + k * 2 * horizon_, 2 * horizon_, values_.data() + (b + k) * 2 * horizon_);
      }
    }
  }

  std::size_t first() const { return first_; }
  std::size_t last() const { return first_ + values_.size() / (2 * horizon_) - 1; }
  std::size_t horizon() const { return horizon_; }

  std::span<const double> at(std::size_t slot) const {
    require(slot >= first_ && slot <= last(), ErrorKind::InsufficientHistory, "no forecast cached for slot " + std::to_string(slot));
    return {values_.data() + (slot - first_) * 2 * horizon_, 2 * horizon_};
  }

 private:
  std::size_t first_ = 0;
  std::size_t horizon_ = 10;
  std::vector<double> values_;
};

inline void save_forecaster(const std::filesystem::path& path, ForecastModel& model) {
  auto tensors = nn::snapshot(model.parameters());
  const auto& a = model.arch();
  tensors.push_back({"arch", Tensor({9}, {static_cast<double>(a.lookback), static_cast<double>(a.horizon),
                                          static_cast<double>(a.features), static_cast<double>(a.filters),
                                          static_cast<double>(a.kernel), static_cast<double>(a.pool),
                                          static_cast<double>(a.hidden), a.dropout_conv, a.dropout_lstm})});
  const auto& n = model.normalizer;
  tensors.push_back({"normalizer", Tensor({4}, {n.min_ul, n.max_ul, n.min_dl, n.max_dl})});
  nn::save_checkpoint(path, tensors);
}

inline ForecastModel load_forecaster(const std::filesystem::path& path) {
  const auto tensors = nn::load_checkpoint(path);
  const Tensor* arch = nn::find_tensor(tensors, "arch");
  const Tensor* norm = nn::find_tensor(tensors, "normalizer");
  require(arch && arch->size() == 9 && norm && norm->size() == 4, ErrorKind::ShapeMismatch,
          path.string() + " is not a forecaster checkpoint");
  ForecastArch a;
  a.lookback = static_cast<std::size_t>((*arch)[0]);
  a.horizon = static_cast<std::size_t>((*arch)[1]);
  a.features = static_cast<std::size_t>((*arch)[2]);
  a.filters = static_cast<std::size_t>((*arch)[3]);
  a.kernel = static_cast<std::size_t>((*arch)[4]);
  a.pool = static_cast<std::size_t>((*arch)[5]);
  a.hidden = static_cast<std::size_t>((*arch)[6]);
  a.dropout_conv = (*arch)[7];
  a.dropout_lstm = (*arch)[8];
  ForecastModel model(0, a);
  nn::restore(model.parameters(), tensors);
  model.normalizer = {(*norm)[0], (*norm)[1], (*norm)[2], (*norm)[3]};
  return model;
}

// Rounds parameters through f32 so in-memory inference matches a reloaded checkpoint bit for bit.
inline void quantize_to_checkpoint_precision(ForecastModel& model) {
  for (auto* p : model.parameters()) {
    for (auto& v : p->value.values()) v = static_cast<double>(static_cast<float>(v));
  }
}

}  // namespace sbfd::forecast
