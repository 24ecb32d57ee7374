#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sbfd/csv.hpp"
#include "sbfd/ddqn.hpp"
#include "sbfd/env.hpp"
#include "sbfd/kv_config.hpp"
#include "sbfd/traffic.hpp"

namespace sbfd::baselines {

using nn::Tensor;

// ---- static split -------------------------------------------------------

// One continuous queued episode over [first, last) with a fixed split.
inline std::vector<env::StepOutcome> static_run(const traffic::TrafficTrace& tr, env::Split split, env::EnvConfig cfg,
                                                std::size_t first, std::size_t last) {
  require(split.ul_pct >= 0 && split.dl_pct >= 0 && split.ul_pct + split.dl_pct == 100, ErrorKind::InvalidArgument,
          "static split must sum to 100");
  require(first < last, ErrorKind::InvalidArgument, "empty static run");
  env::ZeroSource zero;
  env::SbfdEnv e(tr, zero, cfg);
  e.reset(first, last - first);
  std::vector<env::StepOutcome> log;
  log.reserve(last - first);
  while (!e.done()) log.push_back(e.step_split(split));
  return log;
}

// ---- queue-less frame environment ---------------------------------------

struct Frame {
  std::string name;
  double ul_frac = 0.0;
  double dl_frac = 0.0;
};

inline constexpr std::size_t kFrames = 3;
using FrameTable = std::array<Frame, kFrames>;

inline FrameTable default_frames() { return {{{"XXXXX", 0.201, 0.762}, {"XXXXU", 0.361, 0.609}, {"DXXXU", 0.321, 0.657}}}; }

inline void validate(const FrameTable& t) {
  for (const auto& f : t) {
    require(f.ul_frac > 0.0 && f.ul_frac < 1.0 && f.dl_frac > 0.0 && f.dl_frac < 1.0 && f.ul_frac + f.dl_frac <= 1.0 + 1e-12,
            ErrorKind::InvalidConfig, "frame " + f.name + " has invalid capacity fractions");
  }
}

// floor with a small guard so 0.609 * 100000 lands on 60900
inline std::uint64_t frame_cap(double frac, double capacity) {
  return static_cast<std::uint64_t>(std::floor(frac * capacity + 1e-6));
}

struct Throughput {
  double ul = 0.0;
  double dl = 0.0;
  double geo() const { return std::sqrt(ul * dl); }
};

struct FrameStep {
  std::uint64_t served_ul = 0;
  std::uint64_t served_dl = 0;
  double reward = 0.0;  // bits
};

// Unserved demand is dropped. Reward is the increase of sqrt(T_ul * T_dl).
inline FrameStep sacd_env_step(std::uint64_t d_ul, std::uint64_t d_dl, const Frame& f, double capacity, Throughput& T) {
  FrameStep s;
  s.served_ul = std::min(d_ul, frame_cap(f.ul_frac, capacity));
  s.served_dl = std::min(d_dl, frame_cap(f.dl_frac, capacity));
  const double before = T.geo();
  T.ul += static_cast<double>(s.served_ul);
  T.dl += static_cast<double>(s.served_dl);
  s.reward = T.geo() - before;
  return s;
}

// ---- discrete soft actor-critic -----------------------------------------

inline constexpr std::size_t kSacdStateDim = 4;
using SacdState = std::array<double, kSacdStateDim>;
using SacdTransition = ddqn::BasicTransition<kSacdStateDim>;

// [d_ul/C, d_dl/C, T_ul/(k C), T_dl/(k C)] with k slots served so far this episode.
inline SacdState sacd_state(std::uint64_t d_ul, std::uint64_t d_dl, const Throughput& T, std::size_t k, double capacity) {
  const double kc = k ? static_cast<double>(k) * capacity : 1.0;
  return {static_cast<double>(d_ul) / capacity, static_cast<double>(d_dl) / capacity, k ? T.ul / kc : 0.0, k ? T.dl / kc : 0.0};
}

struct SacdConfig {
  double lr = 3e-4;
  double gamma = 0.95;
  double target_entropy_scale = 0.6;  // times ln(3)
  double tau = 0.005;
  std::size_t batch_size = 64;
  std::size_t hidden = 64;
  std::size_t buffer_capacity = 100'000;
  std::size_t warmup = 1000;
  std::size_t episodes = 100;
  std::size_t episode_len = 1000;
  double capacity = 100'000.0;
  double init_alpha = 1.0;
  FrameTable frames = default_frames();
  std::uint64_t seed = 0;

  double target_entropy() const { return target_entropy_scale * std::log(static_cast<double>(kFrames)); }

  void validate() const {
    require(lr > 0.0 && gamma >= 0.0 && gamma <= 1.0 && tau > 0.0 && tau <= 1.0, ErrorKind::InvalidConfig,
            "sacd lr/gamma/tau out of range");
    require(target_entropy_scale >= 0.0 && target_entropy_scale <= 1.0, ErrorKind::InvalidConfig,
            "sacd target entropy scale must be in [0,1]");
    require(batch_size >= 1 && hidden >= 1 && episode_len >= 1 && buffer_capacity >= batch_size, ErrorKind::InvalidConfig,
            "sacd sizes must be positive");
    require(capacity > 0.0 && init_alpha > 0.0, ErrorKind::InvalidConfig, "sacd capacity and alpha must be > 0");
    baselines::validate(frames);
  }

  static SacdConfig from(const KeyValues& kv) {
    SacdConfig c;
    kv.maybe("sacd.lr", c.lr);
    kv.maybe("sacd.gamma", c.gamma);
    kv.maybe("sacd.target_entropy_scale", c.target_entropy_scale);
    kv.maybe("sacd.tau", c.tau);
    kv.maybe("sacd.batch", c.batch_size);
    kv.maybe("sacd.hidden", c.hidden);
    kv.maybe("sacd.buffer", c.buffer_capacity);
    kv.maybe("sacd.warmup", c.warmup);
    kv.maybe("sacd.episodes", c.episodes);
    kv.maybe("sacd.episode_len", c.episode_len);
    kv.maybe("capacity", c.capacity);
    for (auto& f : c.frames) {
      kv.maybe("sacd." + f.name + ".ul", f.ul_frac);
      kv.maybe("sacd." + f.name + ".dl", f.dl_frac);
    }
    c.validate();
    return c;
  }
};

inline void log_softmax_row(const double* z, double* logp, std::size_t n) {
  const double m = *std::max_element(z, z + n);
  double s = 0.0;
  for (std::size_t a = 0; a < n; ++a) s += std::exp(z[a] - m);
  const double lse = m + std::log(s);
  for (std::size_t a = 0; a < n; ++a) logp[a] = z[a] - lse;
}

class SacdAgent {
 public:
  explicit SacdAgent(SacdConfig cfg = {})
      : cfg_((cfg.validate(), cfg)),
        actor_(kSacdStateDim, cfg.hidden, kFrames, cfg.seed * 7 + 1),
        q1_(kSacdStateDim, cfg.hidden, kFrames, cfg.seed * 7 + 2),
        q2_(kSacdStateDim, cfg.hidden, kFrames, cfg.seed * 7 + 3),
        q1_t_(q1_),
        q2_t_(q2_),
        log_alpha_("log_alpha", Tensor({1}, std::log(cfg.init_alpha))),
        opt_actor_({cfg.lr}),
        opt_q1_({cfg.lr}),
        opt_q2_({cfg.lr}),
        opt_alpha_({cfg.lr}),
        buffer_(cfg.buffer_capacity),
        rng_(cfg.seed * 7 + 4) {}

  const SacdConfig& config() const { return cfg_; }
  ddqn::QNetwork& actor() { return actor_; }
  ddqn::QNetwork& critic1() { return q1_; }
  ddqn::QNetwork& critic2() { return q2_; }
  double alpha() const { return std::exp(log_alpha_.value[0]); }
  ddqn::ReplayBuffer<SacdTransition>& buffer() { return buffer_; }
  std::mt19937_64& rng() { return rng_; }
  std::size_t updates() const { return updates_; }

  std::array<double, kFrames> probs(const SacdState& s) {
    const auto z = actor_.q_values(s);
    std::array<double, kFrames> lp{}, p{};
    log_softmax_row(z.data(), lp.data(), kFrames);
    for (std::size_t a = 0; a < kFrames; ++a) p[a] = std::exp(lp[a]);
    return p;
  }

  std::size_t sample(const SacdState& s) {
    const auto p = probs(s);
    std::discrete_distribution<std::size_t> d(p.begin(), p.end());
    return d(rng_);
  }

  std::size_t greedy(const SacdState& s) {
    const auto z = actor_.q_values(s);
    return ddqn::argmax(z);
  }

  void remember(const SacdState& s, std::size_t a, double r, const SacdState& s2, bool terminal) {
    buffer_.push({s, static_cast<std::uint32_t>(a), r, s2, terminal});
  }

  bool warm() const { return buffer_.size() >= std::max(cfg_.warmup, cfg_.batch_size); }

  struct UpdateStats {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double entropy = 0.0;
  };

  UpdateStats update() {
    const auto idx = buffer_.sample_indices(cfg_.batch_size, rng_);
    std::vector<const SacdTransition*> batch(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) batch[k] = &buffer_[idx[k]];
    return update_on(batch);
  }

  UpdateStats update_on(std::span<const SacdTransition* const> batch) {
    constexpr std::size_t A = kFrames;
    const std::size_t B = batch.size();
    const double n = static_cast<double>(B);
    const double alpha = this->alpha();
    UpdateStats st;

    // soft state value of s' under the current policy and target critics
    const Tensor s2 = ddqn::stack_states<kSacdStateDim>(batch, true);
    const Tensor z2 = actor_.forward(s2);
    const Tensor t1 = q1_t_.forward(s2);
    const Tensor t2 = q2_t_.forward(s2);
    std::vector<double> y(B);
    for (std::size_t k = 0; k < B; ++k) {
      double lp[A];
      log_softmax_row(z2.ptr() + k * A, lp, A);
      double v = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        v += std::exp(lp[a]) * (std::min(t1[k * A + a], t2[k * A + a]) - alpha * lp[a]);
      }
      y[k] = batch[k]->reward + (batch[k]->terminal ? 0.0 : cfg_.gamma * v);
    }

    q1_.zero_grad();
    st.critic_loss += ddqn::td_loss_backward<kSacdStateDim>(q1_, batch, y);
    auto p1 = q1_.parameters();
    opt_q1_.step(p1);
    q2_.zero_grad();
    st.critic_loss += ddqn::td_loss_backward<kSacdStateDim>(q2_, batch, y);
    auto p2 = q2_.parameters();
    opt_q2_.step(p2);

    // actor: minimize sum_a pi(a|s) (alpha log pi(a|s) - min Q(s,a))
    const Tensor s = ddqn::stack_states<kSacdStateDim>(batch, false);
    const Tensor c1 = q1_.forward(s);
    const Tensor c2 = q2_.forward(s);
    actor_.zero_grad();
    const Tensor z = actor_.forward(s);
    Tensor dz(z.shape());
    double ent_sum = 0.0;
    for (std::size_t k = 0; k < B; ++k) {
      double lp[A], p[A], g[A];
      log_softmax_row(z.ptr() + k * A, lp, A);
      double pg = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        p[a] = std::exp(lp[a]);
        const double q = std::min(c1[k * A + a], c2[k * A + a]);
        st.actor_loss += p[a] * (alpha * lp[a] - q) / n;
        ent_sum -= p[a] * lp[a];
        g[a] = alpha * (lp[a] + 1.0) - q;
        pg += p[a] * g[a];
      }
      for (std::size_t a = 0; a < A; ++a) dz[k * A + a] = p[a] * (g[a] - pg) / n;
    }
    actor_.backward(dz);
    auto pa = actor_.parameters();
    opt_actor_.step(pa);

    // temperature: d/dlog_alpha of log_alpha * (H - H_target)
    st.entropy = ent_sum / n;
    log_alpha_.grad[0] = st.entropy - cfg_.target_entropy();
    nn::Parameter* la[] = {&log_alpha_};
    opt_alpha_.step(la);

    soft_update(q1_t_, q1_);
    soft_update(q2_t_, q2_);
    ++updates_;
    return st;
  }

  // actor head logits + metadata; enough to evaluate the policy.
  void save(const std::filesystem::path& path) {
    auto tensors = nn::snapshot(actor_.parameters());
    tensors.push_back({"sacd.dims", Tensor({3}, {static_cast<double>(kSacdStateDim), static_cast<double>(cfg_.hidden),
                                                 static_cast<double>(kFrames)})});
    Tensor frames({kFrames, 2});
    for (std::size_t a = 0; a < kFrames; ++a) {
      frames[2 * a] = cfg_.frames[a].ul_frac;
      frames[2 * a + 1] = cfg_.frames[a].dl_frac;
    }
    tensors.push_back({"sacd.frames", frames});
    tensors.push_back({"sacd.meta", Tensor({2}, {cfg_.capacity, static_cast<double>(cfg_.episode_len)})});
    nn::save_checkpoint(path, tensors);
  }

 private:
  void soft_update(ddqn::QNetwork& target, ddqn::QNetwork& src) {
    auto t = target.parameters();
    auto s = src.parameters();
    for (std::size_t i = 0; i < t.size(); ++i) {
      auto tv = t[i]->value.values();
      auto sv = s[i]->value.values();
      for (std::size_t j = 0; j < tv.size(); ++j) tv[j] = (1.0 - cfg_.tau) * tv[j] + cfg_.tau * sv[j];
    }
  }

  SacdConfig cfg_;
  ddqn::QNetwork actor_, q1_, q2_, q1_t_, q2_t_;
  nn::Parameter log_alpha_;
  nn::Adam opt_actor_, opt_q1_, opt_q2_, opt_alpha_;
  ddqn::ReplayBuffer<SacdTransition> buffer_;
  std::mt19937_64 rng_;
  std::size_t updates_ = 0;
};

// Frozen greedy policy loaded from a checkpoint.
struct SacdPolicy {
  ddqn::QNetwork actor;
  FrameTable frames = default_frames();
  double capacity = 100'000.0;
  std::size_t episode_len = 1000;

  std::size_t act(const SacdState& s) { return ddqn::argmax(actor.q_values(s)); }
};

inline SacdPolicy load_sacd_policy(const std::filesystem::path& path) {
  const auto tensors = nn::load_checkpoint(path);
  const Tensor* dims = nn::find_tensor(tensors, "sacd.dims");
  const Tensor* frames = nn::find_tensor(tensors, "sacd.frames");
  const Tensor* meta = nn::find_tensor(tensors, "sacd.meta");
  require(dims && dims->size() == 3 && frames && frames->size() == 2 * kFrames && meta && meta->size() == 2, ErrorKind::ShapeMismatch,
          path.string() + " is not a SAC-D checkpoint");
  SacdPolicy p{ddqn::QNetwork(static_cast<std::size_t>((*dims)[0]), static_cast<std::size_t>((*dims)[1]),
                              static_cast<std::size_t>((*dims)[2]))};
  nn::restore(p.actor.parameters(), tensors);
  for (std::size_t a = 0; a < kFrames; ++a) {
    p.frames[a].ul_frac = (*frames)[2 * a];
    p.frames[a].dl_frac = (*frames)[2 * a + 1];
  }
  p.capacity = (*meta)[0];
  p.episode_len = static_cast<std::size_t>((*meta)[1]);
  return p;
}

struct FrameRecord {
  std::size_t slot = 0;
  std::size_t action = 0;
  std::uint64_t d_ul = 0, d_dl = 0;
  std::uint64_t served_ul = 0, served_dl = 0;
  double reward = 0.0;
};

using FrameChooser = std::function<std::size_t(const SacdState&)>;

// Throughputs reset every episode_len slots counted from `first`.
inline std::vector<FrameRecord> sacd_rollout(const traffic::TrafficTrace& tr, std::size_t first, std::size_t last,
                                             const FrameTable& frames, double capacity, std::size_t episode_len,
                                             const FrameChooser& choose) {
  require(first < last && last <= tr.size(), ErrorKind::InsufficientTrace, "rollout range outside trace");
  std::vector<FrameRecord> out;
  out.reserve(last - first);
  Throughput T;
  for (std::size_t t = first; t < last; ++t) {
    const std::size_t k = (t - first) % episode_len;
    if (k == 0) T = {};
    const auto s = sacd_state(tr[t].ul, tr[t].dl, T, k, capacity);
    const std::size_t a = choose(s);
    const auto r = sacd_env_step(tr[t].ul, tr[t].dl, frames[a], capacity, T);
    out.push_back({t, a, tr[t].ul, tr[t].dl, r.served_ul, r.served_dl, r.reward});
  }
  return out;
}

using Histogram = std::array<std::size_t, kFrames>;

inline Histogram histogram(const std::vector<FrameRecord>& recs) {
  Histogram h{};
  for (const auto& r : recs) ++h[r.action];
  return h;
}

inline void write_histogram(const std::filesystem::path& path, const Histogram& h, const FrameTable& frames) {
  std::size_t total = 0;
  for (auto c : h) total += c;
  auto os = open_csv(path);
  os << "action,frame,count,fraction\n";
  for (std::size_t a = 0; a < kFrames; ++a) {
    os << a << ',' << frames[a].name << ',' << h[a] << ',' << fmt_num(total ? static_cast<double>(h[a]) / static_cast<double>(total) : 0.0)
       << '\n';
  }
  close_csv(os, path);
}

struct SacdEpisode {
  std::size_t episode = 0;
  double mean_reward = 0.0;  // bits per slot
  double alpha = 0.0;
  double entropy = 0.0;
};

struct SacdResult {
  std::vector<SacdEpisode> episodes;
  Histogram eval_histogram{};
};

// Trains on sliding 1000-slot episodes (stochastic actions, reward scaled by 1/C), then
// evaluates the greedy policy over the whole trace.
inline SacdResult sacd_train(const traffic::TrafficTrace& tr, SacdAgent& agent,
                             const std::function<void(const SacdEpisode&)>& on_episode = {}) {
  const auto& cfg = agent.config();
  const std::size_t len = cfg.episode_len;
  require(tr.size() >= len, ErrorKind::InsufficientTrace, "trace shorter than one SAC-D episode");
  const std::size_t span = tr.size() - len + 1;
  SacdResult res;
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    const std::size_t start = (e * len) % span;
    Throughput T;
    SacdEpisode rec;
    rec.episode = e;
    double ent = 0.0;
    std::size_t n_upd = 0;
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t t = start + k;
      const auto s = sacd_state(tr[t].ul, tr[t].dl, T, k, cfg.capacity);
      const std::size_t a = agent.sample(s);
      const auto r = sacd_env_step(tr[t].ul, tr[t].dl, cfg.frames[a], cfg.capacity, T);
      const bool terminal = k + 1 == len;
      const std::size_t tn = terminal ? t : t + 1;
      const auto s2 = sacd_state(tr[tn].ul, tr[tn].dl, T, k + 1, cfg.capacity);
      agent.remember(s, a, r.reward / cfg.capacity, s2, terminal);
      rec.mean_reward += r.reward;
      if (agent.warm()) {
        ent += agent.update().entropy;
        ++n_upd;
      }
    }
    rec.mean_reward /= static_cast<double>(len);
    rec.alpha = agent.alpha();
    rec.entropy = n_upd ? ent / static_cast<double>(n_upd) : std::log(static_cast<double>(kFrames));
    res.episodes.push_back(rec);
    if (on_episode) on_episode(rec);
  }
  const auto recs = sacd_rollout(tr, 0, tr.size(), cfg.frames, cfg.capacity, len, [&](const SacdState& s) { return agent.greedy(s); });
  res.eval_histogram = histogram(recs);
  return res;
}

}  // namespace sbfd::baselines
