#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "sbfd/ddqn.hpp"
#include "test_util.hpp"

using namespace sbfd;
using namespace sbfd::ddqn;
using sbfd::testing::kind_of;

namespace {

// 1 -> 1 -> 1 -> 2 network whose output is exactly head_w for any input.
QNetwork constant_head(double w0, double w1) {
  QNetwork net(1, 1, 2, 0);
  net.layer(0).weight().value.fill(0.0);
  net.layer(0).bias().value.fill(1.0);
  net.layer(1).weight().value.fill(1.0);
  net.layer(1).bias().value.fill(0.0);
  net.layer(2).weight().value = Tensor({1, 2}, {w0, w1});
  net.layer(2).bias().value.fill(0.0);
  return net;
}

std::vector<double> flat(QNetwork& n) {
  std::vector<double> out;
  for (auto* p : n.parameters()) out.insert(out.end(), p->value.values().begin(), p->value.values().end());
  return out;
}

Transition random_transition(std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Transition t;
  for (auto& v : t.state) v = nd(rng);
  for (auto& v : t.next_state) v = nd(rng);
  t.action = static_cast<std::uint32_t>(rng() % env::kActions);
  t.reward = std::tanh(nd(rng));
  t.terminal = rng() % 10 == 0;
  return t;
}

}  // namespace

TEST(Policy, EpsilonOneIsUniform) {
  QNetwork net(env::kStateDim, 16, env::kActions, 1);
  std::mt19937_64 rng(2);
  env::StateVec s{};
  std::vector<double> count(env::kActions, 0.0);
  const int n = 100'000;
  for (int i = 0; i < n; ++i) count[select_action(net, s, 1.0, rng)] += 1.0;
  for (double c : count) EXPECT_NEAR(c / n, 0.2, 0.02 * 0.2);
}

TEST(Policy, EpsilonZeroIsGreedy) {
  QNetwork net = constant_head(0.5, 3.0);
  std::mt19937_64 rng(3);
  const std::vector<double> s{0.7};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(select_action(net, s, 0.0, rng), 1u);
}

TEST(Policy, ArgmaxTiesGoLow) {
  EXPECT_EQ(argmax(std::vector<double>{1, 3, 3, 2}), 1u);
  EXPECT_EQ(argmax(std::vector<double>{0, 0, 0}), 0u);
  EXPECT_EQ(argmax(std::vector<double>{-5, -1, -1}), 1u);
}

// Online prefers action 1, target values action 1 at zero: y = r, not r + gamma * 10.
TEST(DoubleQ, OnlineSelectsTargetEvaluates) {
  QNetwork online = constant_head(1.0, 2.0);
  QNetwork target = constant_head(10.0, 0.0);
  BasicTransition<1> t;
  t.reward = 0.0;
  std::vector<const BasicTransition<1>*> batch{&t};
  EXPECT_EQ(td_targets<1>(batch, online, target, 0.95)[0], 0.0);
  t.reward = 0.25;
  EXPECT_EQ(td_targets<1>(batch, online, target, 0.95)[0], 0.25);
  // flip the online preference and the target's value shows up
  QNetwork online2 = constant_head(2.0, 1.0);
  EXPECT_DOUBLE_EQ(td_targets<1>(batch, online2, target, 0.5)[0], 0.25 + 0.5 * 10.0);
}

TEST(DoubleQ, TerminalAndZeroGamma) {
  QNetwork online = constant_head(1.0, 2.0);
  QNetwork target = constant_head(10.0, 7.0);
  BasicTransition<1> t;
  t.reward = -0.5;
  std::vector<const BasicTransition<1>*> batch{&t};
  EXPECT_DOUBLE_EQ(td_targets<1>(batch, online, target, 0.9)[0], -0.5 + 0.9 * 7.0);
  EXPECT_EQ(td_targets<1>(batch, online, target, 0.0)[0], -0.5);
  t.terminal = true;
  EXPECT_EQ(td_targets<1>(batch, online, target, 0.9)[0], -0.5);
}

TEST(Learn, ZeroLossLeavesParametersUnchanged) {
  AgentConfig cfg;
  cfg.seed = 4;
  Agent agent(cfg);
  std::mt19937_64 rng(5);
  Transition t = random_transition(rng);
  t.terminal = true;
  t.reward = agent.online().q_values(t.state)[t.action];
  const auto before = flat(agent.online());
  const Transition* batch[] = {&t};
  EXPECT_EQ(agent.learn_on(batch), 0.0);
  EXPECT_EQ(flat(agent.online()), before);
}

TEST(Learn, ConvergesToFixedTarget) {
  AgentConfig cfg;
  cfg.seed = 6;
  cfg.adam.learning_rate = 1e-2;
  cfg.sync_every = 1'000'000;
  Agent agent(cfg);
  std::mt19937_64 rng(7);
  Transition t = random_transition(rng);
  t.terminal = true;
  t.reward = 0.7;
  const auto target_before = flat(agent.target());
  const Transition* batch[] = {&t};
  for (int i = 0; i < 2000; ++i) agent.learn_on(batch);
  EXPECT_NEAR(agent.online().q_values(t.state)[t.action], 0.7, 1e-3);
  EXPECT_EQ(flat(agent.target()), target_before);
}

TEST(Target, SyncIsBitIdenticalAndPeriodic) {
  AgentConfig cfg;
  cfg.seed = 8;
  cfg.warmup = 32;
  Agent agent(cfg);
  EXPECT_NE(flat(agent.online()), flat(agent.target()));
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) agent.buffer().push(random_transition(rng));
  for (int i = 0; i < 499; ++i) agent.learn_step();
  EXPECT_NE(flat(agent.online()), flat(agent.target()));
  EXPECT_TRUE(agent.sync_log().empty());
  agent.learn_step();
  EXPECT_EQ(flat(agent.online()), flat(agent.target()));
  for (int i = 0; i < 1000; ++i) agent.learn_step();
  EXPECT_EQ(agent.sync_log(), (std::vector<std::size_t>{500, 1000, 1500}));
  agent.learn_step();
  EXPECT_NE(flat(agent.online()), flat(agent.target()));
}

TEST(Replay, FifoEvictionAtCapacity) {
  ReplayBuffer<Transition> buf(100'000);
  const std::size_t k = 1234;
  for (std::size_t i = 0; i < 100'000 + k; ++i) {
    Transition t;
    t.reward = static_cast<double>(i);
    buf.push(t);
  }
  EXPECT_EQ(buf.size(), 100'000u);
  EXPECT_EQ(buf.oldest(0).reward, static_cast<double>(k));
  EXPECT_EQ(buf.oldest(99'999).reward, static_cast<double>(100'000 + k - 1));
  for (std::size_t i = 0; i < 50'000 - k; ++i) buf.push(Transition{});
  EXPECT_EQ(buf.size(), 100'000u);
  EXPECT_EQ(buf.total_pushed(), 150'000u);
  EXPECT_EQ(buf.oldest(0).reward, 50'000.0);
}

TEST(Replay, SamplingRules) {
  ReplayBuffer<Transition> buf(10);
  std::mt19937_64 rng(10);
  EXPECT_EQ(kind_of([&] { buf.sample_indices(1, rng); }), ErrorKind::BufferTooSmall);
  for (int i = 0; i < 5; ++i) buf.push(Transition{});
  EXPECT_EQ(kind_of([&] { buf.sample_indices(6, rng); }), ErrorKind::BufferTooSmall);
  auto idx = buf.sample_indices(5, rng);
  std::sort(idx.begin(), idx.end());
  EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(kind_of([] { ReplayBuffer<Transition>(0); }), ErrorKind::InvalidConfig);
}

TEST(Epsilon, NeverBelowFloor) {
  const AgentConfig cfg;
  double prev = 2.0;
  for (std::size_t e = 0; e < 5000; ++e) {
    const double eps = cfg.epsilon_at(e);
    ASSERT_GE(eps, cfg.eps_min);
    ASSERT_LE(eps, prev);
    prev = eps;
  }
  EXPECT_EQ(cfg.epsilon_at(0), 1.0);
  EXPECT_DOUBLE_EQ(cfg.epsilon_at(1), 0.995);
  // 0.995^e first drops below 0.05 at e = 598
  EXPECT_GT(cfg.epsilon_at(597), cfg.eps_min);
  EXPECT_EQ(cfg.epsilon_at(598), cfg.eps_min);
}

TEST(Episodes, StartsSlideOverTrace) {
  EXPECT_EQ(episode_start(0, 100'000, 1000), 30u);
  EXPECT_EQ(episode_start(5, 100'000, 1000), 5030u);
  // usable span is 100000 - 30 - 1000 + 1 = 98971
  EXPECT_EQ(episode_start(99, 100'000, 1000), 30u + 99'000u % 98'971u);
  EXPECT_EQ(kind_of([] { episode_start(0, 1029, 1000); }), ErrorKind::InsufficientTrace);
}

namespace {

std::vector<EpisodeRecord> smoke_run(std::uint64_t seed) {
  traffic::TrafficTrace tr = traffic::generate_trace(traffic::default_chain(), 400, 3);
  env::ZeroSource src;
  env::EnvConfig ecfg;
  ecfg.episode_len = 100;
  env::SbfdEnv env(tr, src, ecfg);
  AgentConfig cfg;
  cfg.seed = seed;
  cfg.warmup = 50;
  Agent agent(cfg);
  return train_loop(env, tr.size(), agent, 3);
}

}  // namespace

TEST(Episodes, SmokeRunIsSeeded) {
  const auto a = smoke_run(11), b = smoke_run(11), c = smoke_run(12);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(a[e].mean_reward, b[e].mean_reward);
    EXPECT_EQ(a[e].mean_q_ul, b[e].mean_q_ul);
    EXPECT_GE(a[e].mean_reward, -1.0);
    EXPECT_LE(a[e].mean_reward, 1.0);
    EXPECT_DOUBLE_EQ(a[e].epsilon, AgentConfig{}.epsilon_at(e));
  }
  bool differs = false;
  for (std::size_t e = 0; e < 3; ++e) differs |= a[e].mean_reward != c[e].mean_reward;
  EXPECT_TRUE(differs);
}

TEST(Checkpoint, QNetworkRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "sbfd_test_ddqn";
  std::filesystem::create_directories(dir);
  QNetwork net(env::kStateDim, 64, env::kActions, 13);
  save_qnetwork(dir / "q.ckpt", net);
  QNetwork back = load_qnetwork(dir / "q.ckpt");
  EXPECT_EQ(back.hidden_dim(), 64u);
  quantize_to_checkpoint_precision(net);
  EXPECT_EQ(flat(back), flat(net));
  std::filesystem::remove_all(dir);
}
