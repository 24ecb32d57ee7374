#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "sbfd/csv.hpp"
#include "sbfd/env.hpp"
#include "sbfd/kv_config.hpp"
#include "sbfd/nn/adam.hpp"
#include "sbfd/nn/checkpoint.hpp"
#include "sbfd/nn/layers.hpp"

namespace sbfd::ddqn {

using nn::Mode;
using nn::Tensor;

// in -> hidden relu -> hidden relu -> out (linear head).
class QNetwork {
 public:
  QNetwork(std::size_t in = env::kStateDim, std::size_t hidden = 64, std::size_t out = env::kActions, std::uint64_t seed = 0)
      : QNetwork(in, hidden, out, std::mt19937_64(seed)) {}

  std::size_t in_dim() const { return l1_.in_features(); }
  std::size_t hidden_dim() const { return l1_.out_features(); }
  std::size_t out_dim() const { return l3_.out_features(); }

  // (B, in) -> (B, out)
  Tensor forward(const Tensor& x) {
    Tensor h = a1_.forward(l1_.forward(x, Mode::Eval), Mode::Eval);
    h = a2_.forward(l2_.forward(h, Mode::Eval), Mode::Eval);
    return l3_.forward(h, Mode::Eval);
  }

  Tensor backward(const Tensor& dy) { return l1_.backward(a1_.backward(l2_.backward(a2_.backward(l3_.backward(dy))))); }

  std::vector<double> q_values(std::span<const double> state) {
    require(state.size() == in_dim(), ErrorKind::ShapeMismatch, "state has " + std::to_string(state.size()) + " entries");
    const Tensor q = forward(Tensor({1, in_dim()}, std::vector<double>(state.begin(), state.end())));
    return {q.values().begin(), q.values().end()};
  }

  std::vector<nn::Parameter*> parameters() {
    return {&l1_.weight(), &l1_.bias(), &l2_.weight(), &l2_.bias(), &l3_.weight(), &l3_.bias()};
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  // Hard copy of weights; optimizer moments are left alone.
  void copy_weights_from(QNetwork& other) {
    auto dst = parameters();
    auto src = other.parameters();
    require(dst.size() == src.size(), ErrorKind::ShapeMismatch, "network layouts differ");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      require(dst[i]->value.shape() == src[i]->value.shape(), ErrorKind::ShapeMismatch, "network layouts differ");
      dst[i]->value = src[i]->value;
    }
  }

  nn::Dense& layer(std::size_t i) { return i == 0 ? l1_ : i == 1 ? l2_ : l3_; }

 private:
  QNetwork(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64&& rng)
      : l1_(in, hidden, "l1", rng), l2_(hidden, hidden, "l2", rng), l3_(hidden, out, "l3", rng) {}

  nn::Dense l1_, l2_, l3_;
  nn::Elementwise a1_{nn::Activation::Relu}, a2_{nn::Activation::Relu};
};

// Lowest index wins ties.
inline std::size_t argmax(std::span<const double> q) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.size(); ++i) {
    if (q[i] > q[best]) best = i;
  }
  return best;
}

// r is always drawn first so the random stream does not depend on epsilon.
inline std::size_t select_action(QNetwork& online, std::span<const double> state, double epsilon, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (unif(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, online.out_dim() - 1);
    return pick(rng);
  }
  return argmax(online.q_values(state));
}

template <std::size_t Dim>
struct BasicTransition {
  std::array<double, Dim> state{};
  std::uint32_t action = 0;
  double reward = 0.0;
  std::array<double, Dim> next_state{};
  bool terminal = false;
};

using Transition = BasicTransition<env::kStateDim>;

// Fixed-capacity ring; once full the oldest entry is overwritten.
template <typename T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100'000) : capacity_(capacity) {
    require(capacity >= 1, ErrorKind::InvalidConfig, "replay capacity must be >= 1");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return data_.size(); }
  std::uint64_t total_pushed() const { return pushed_; }

  void push(const T& t) {
    if (data_.size() < capacity_) {
      data_.push_back(t);
    } else {
      data_[head_] = t;
    }
    head_ = (head_ + 1) % capacity_;
    ++pushed_;
  }

  // age 0 = oldest retained entry
  const T& oldest(std::size_t age) const {
    require(age < data_.size(), ErrorKind::InvalidArgument, "replay index out of range");
    const std::size_t base = data_.size() < capacity_ ? 0 : head_;
    return data_[(base + age) % capacity_];
  }

  const T& operator[](std::size_t raw) const { return data_[raw]; }

  // Uniform without replacement within one batch (rejection on duplicates).
  std::vector<std::size_t> sample_indices(std::size_t batch, std::mt19937_64& rng) const {
    require(batch >= 1 && data_.size() >= batch, ErrorKind::BufferTooSmall,
            "replay holds " + std::to_string(data_.size()) + " transitions, batch needs " + std::to_string(batch));
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    std::vector<std::size_t> idx;
    idx.reserve(batch);
    while (idx.size() < batch) {
      const std::size_t i = pick(rng);
      if (std::find(idx.begin(), idx.end(), i) == idx.end()) idx.push_back(i);
    }
    return idx;
  }

 private:
  std::size_t capacity_;
  std::vector<T> data_;
  std::size_t head_ = 0;
  std::uint64_t pushed_ = 0;
};

struct AgentConfig {
  double gamma = 0.95;
  double eps_start = 1.0;
  double eps_min = 0.05;
  double eps_decay = 0.995;
  std::size_t batch_size = 32;
  std::size_t sync_every = 500;
  std::size_t warmup = 1000;
  std::size_t buffer_capacity = 100'000;
  std::size_t hidden = 64;
  nn::AdamConfig adam;
  std::uint64_t seed = 0;

  void validate() const {
    require(gamma >= 0.0 && gamma <= 1.0, ErrorKind::InvalidConfig, "gamma must be in [0,1]");
    require(eps_min >= 0.0 && eps_min <= eps_start && eps_start <= 1.0, ErrorKind::InvalidConfig,
            "epsilon schedule needs 0 <= eps_min <= eps_start <= 1");
    require(eps_decay > 0.0 && eps_decay <= 1.0, ErrorKind::InvalidConfig, "eps_decay must be in (0,1]");
    require(batch_size >= 1 && sync_every >= 1 && hidden >= 1, ErrorKind::InvalidConfig, "batch, sync period and width must be >= 1");
    require(buffer_capacity >= batch_size, ErrorKind::InvalidConfig, "replay capacity smaller than batch");
    adam.validate();
  }

  static AgentConfig from(const KeyValues& kv) {
    AgentConfig c;
    kv.maybe("agent.gamma", c.gamma);
    kv.maybe("agent.eps_start", c.eps_start);
    kv.maybe("agent.eps_min", c.eps_min);
    kv.maybe("agent.eps_decay", c.eps_decay);
    kv.maybe("agent.batch", c.batch_size);
    kv.maybe("agent.sync_every", c.sync_every);
    kv.maybe("agent.warmup", c.warmup);
    kv.maybe("agent.buffer", c.buffer_capacity);
    kv.maybe("agent.hidden", c.hidden);
    kv.maybe("agent.lr", c.adam.learning_rate);
    c.validate();
    return c;
  }

  double epsilon_at(std::size_t episode) const {
    return std::max(eps_min, eps_start * std::pow(eps_decay, static_cast<double>(episode)));
  }
};

template <std::size_t Dim>
Tensor stack_states(std::span<const BasicTransition<Dim>* const> batch, bool next) {
  Tensor x({batch.size(), Dim});
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& s = next ? batch[k]->next_state : batch[k]->state;
    std::copy(s.begin(), s.end(), x.ptr() + k * Dim);
  }
  return x;
}

// y = r for terminal samples, else r + gamma * Q_target(s', argmax_a Q_online(s', a)).
template <std::size_t Dim>
std::vector<double> td_targets(std::span<const BasicTransition<Dim>* const> batch, QNetwork& online, QNetwork& target, double gamma) {
  require(!batch.empty(), ErrorKind::InvalidArgument, "empty batch");
  const Tensor s2 = stack_states<Dim>(batch, true);
  const Tensor q_on = online.forward(s2);
  const Tensor q_tg = target.forward(s2);
  const std::size_t A = online.out_dim();
  std::vector<double> y(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    y[k] = batch[k]->reward;
    if (batch[k]->terminal) continue;
    const std::size_t a = argmax(std::span<const double>(q_on.ptr() + k * A, A));
    y[k] += gamma * q_tg[k * A + a];
  }
  return y;
}

// Mean squared error on the taken actions only; accumulates gradients into `net`.
template <std::size_t Dim>
double td_loss_backward(QNetwork& net, std::span<const BasicTransition<Dim>* const> batch, std::span<const double> y) {
  const Tensor q = net.forward(stack_states<Dim>(batch, false));
  const std::size_t A = net.out_dim();
  Tensor dq(q.shape());
  double loss = 0.0;
  const double n = static_cast<double>(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const std::size_t i = k * A + batch[k]->action;
    const double d = q[i] - y[k];
    loss += d * d / n;
    dq[i] = 2.0 * d / n;
  }
  net.backward(dq);
  return loss;
}

class Agent {
 public:
  explicit Agent(AgentConfig cfg = {})
      : cfg_((cfg.validate(), cfg)),
        online_(env::kStateDim, cfg.hidden, env::kActions, cfg.seed),
        target_(env::kStateDim, cfg.hidden, env::kActions, cfg.seed ^ 0x5851f42d4c957f2dULL),
        buffer_(cfg.buffer_capacity),
        adam_(cfg.adam),
        rng_(cfg.seed + 1) {}

  const AgentConfig& config() const { return cfg_; }
  QNetwork& online() { return online_; }
  QNetwork& target() { return target_; }
  ReplayBuffer<Transition>& buffer() { return buffer_; }
  std::mt19937_64& rng() { return rng_; }
  std::size_t gradient_steps() const { return grad_steps_; }
  const std::vector<std::size_t>& sync_log() const { return sync_log_; }

  std::size_t act(const env::EnvState& s, double epsilon) { return select_action(online_, s.v, epsilon, rng_); }
  std::size_t greedy(const env::EnvState& s) { return argmax(online_.q_values(s.v)); }

  void remember(const env::EnvState& s, std::size_t a, double r, const env::EnvState& s2, bool terminal) {
    buffer_.push({s.v, static_cast<std::uint32_t>(a), r, s2.v, terminal});
  }

  void sync_target() { target_.copy_weights_from(online_); }

  double learn_on(std::span<const Transition* const> batch) {
    const auto y = td_targets<env::kStateDim>(batch, online_, target_, cfg_.gamma);
    online_.zero_grad();
    const double loss = td_loss_backward<env::kStateDim>(online_, batch, y);
    auto params = online_.parameters();
    adam_.step(params);
    ++grad_steps_;
    if (grad_steps_ % cfg_.sync_every == 0) {
      sync_target();
      sync_log_.push_back(grad_steps_);
    }
    return loss;
  }

  double learn_step() {
    const auto idx = buffer_.sample_indices(cfg_.batch_size, rng_);
    std::vector<const Transition*> batch(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) batch[k] = &buffer_[idx[k]];
    return learn_on(batch);
  }

  bool warm() const { return buffer_.size() >= std::max(cfg_.warmup, cfg_.batch_size); }

 private:
  AgentConfig cfg_;
  QNetwork online_, target_;
  ReplayBuffer<Transition> buffer_;
  nn::Adam adam_;
  std::mt19937_64 rng_;
  std::size_t grad_steps_ = 0;
  std::vector<std::size_t> sync_log_;
};

struct EpisodeRecord {
  std::size_t episode = 0;
  double epsilon = 0.0;
  double mean_reward = 0.0;
  double mean_q_ul = 0.0;
  double mean_q_dl = 0.0;
  double switch_rate = 0.0;
};

// Episode e starts at 30 + (e * len) mod (usable span), so episodes slide over the whole trace.
inline std::size_t episode_start(std::size_t episode, std::size_t trace_len, std::size_t len) {
  const std::size_t lo = env::SbfdEnv::kMinStart;
  require(trace_len >= lo + len, ErrorKind::InsufficientTrace,
          "trace of " + std::to_string(trace_len) + " slots is too short for " + std::to_string(len) + "-slot episodes");
  const std::size_t span = trace_len - lo - len + 1;
  return lo + (episode * len) % span;
}

using EpisodeCallback = std::function<void(const EpisodeRecord&)>;

inline std::vector<EpisodeRecord> train_loop(env::SbfdEnv& env, std::size_t trace_len, Agent& agent, std::size_t n_episodes,
                                             const EpisodeCallback& on_episode = {}) {
  std::vector<EpisodeRecord> log;
  const std::size_t len = env.config().episode_len;
  for (std::size_t e = 0; e < n_episodes; ++e) {
    const double eps = agent.config().epsilon_at(e);
    env::EnvState s = env.reset(episode_start(e, trace_len, len));
    EpisodeRecord rec;
    rec.episode = e;
    rec.epsilon = eps;
    std::size_t steps = 0, switches = 0, prev = env::kActions;
    while (!env.done()) {
      const std::size_t a = agent.act(s, eps);
      const auto o = env.step(a);
      agent.remember(s, a, o.reward, o.next_state, o.terminal);
      if (agent.warm()) agent.learn_step();
      rec.mean_reward += o.reward;
      rec.mean_q_ul += static_cast<double>(o.next_q_ul);
      rec.mean_q_dl += static_cast<double>(o.next_q_dl);
      if (prev != env::kActions && prev != a) ++switches;
      prev = a;
      ++steps;
      s = o.next_state;
    }
    const double n = static_cast<double>(steps);
    rec.mean_reward /= n;
    rec.mean_q_ul /= n;
    rec.mean_q_dl /= n;
    rec.switch_rate = static_cast<double>(switches) / n;
    log.push_back(rec);
    if (on_episode) on_episode(rec);
  }
  return log;
}

inline void write_episode_log(const std::filesystem::path& path, const std::vector<EpisodeRecord>& log) {
  auto os = open_csv(path);
  os << "episode,epsilon,mean_reward,mean_q_ul,mean_q_dl,switch_rate\n";
  for (const auto& r : log) {
    os << r.episode << ',' << fmt_num(r.epsilon) << ',' << fmt_num(r.mean_reward) << ',' << fmt_num(r.mean_q_ul) << ','
       << fmt_num(r.mean_q_dl) << ',' << fmt_num(r.switch_rate) << '\n';
  }
  close_csv(os, path);
}

inline void save_qnetwork(const std::filesystem::path& path, QNetwork& net) {
  auto tensors = nn::snapshot(net.parameters());
  tensors.push_back({"qnet.dims", Tensor({3}, {static_cast<double>(net.in_dim()), static_cast<double>(net.hidden_dim()),
                                              static_cast<double>(net.out_dim())})});
  nn::save_checkpoint(path, tensors);
}

inline QNetwork load_qnetwork(const std::filesystem::path& path) {
  const auto tensors = nn::load_checkpoint(path);
  const Tensor* dims = nn::find_tensor(tensors, "qnet.dims");
  require(dims && dims->size() == 3, ErrorKind::ShapeMismatch, path.string() + " is not a Q-network checkpoint");
  QNetwork net(static_cast<std::size_t>((*dims)[0]), static_cast<std::size_t>((*dims)[1]), static_cast<std::size_t>((*dims)[2]));
  nn::restore(net.parameters(), tensors);
  return net;
}

inline void quantize_to_checkpoint_precision(QNetwork& net) {
  for (auto* p : net.parameters()) {
    for (auto& v : p->value.values()) v = static_cast<double>(static_cast<float>(v));
  }
}

}  // namespace sbfd::ddqn
