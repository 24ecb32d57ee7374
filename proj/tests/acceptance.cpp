// Desk-scale acceptance run. Prints one PASS/FAIL line per criterion; exit status 1 if any fails.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "sbfd/cli.hpp"
#include "sbfd/nn/grad_check.hpp"

namespace fs = std::filesystem;
using namespace sbfd;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& msg) {
  static const auto t0 = std::chrono::steady_clock::now();
  const auto s = std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "[%4lds] %s\n", static_cast<long>(s), msg.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---- 1: finite differences over every primitive and both full models ----

Verdict gradient_suite() {
  using namespace nn;
  double prim = 0.0, full = 0.0;
  std::string worst_prim, worst_full;
  auto note = [](double& acc, std::string& where, const GradCheckReport& r, const std::string& what) {
    if (r.max_rel_error > acc) acc = r.max_rel_error, where = what + ":" + r.worst;
  };
  // several random draws per primitive
  for (std::uint64_t seed = 100; seed < 105; ++seed) {
    std::mt19937_64 rng(seed);
    Dense d(5, 4, "d", rng);
    note(prim, worst_prim, grad_check(d, random_tensor({3, 5}, rng), rng), "dense");
    Conv1d c(2, 4, 3, "c", rng);
    note(prim, worst_prim, grad_check(c, random_tensor({2, 9, 2}, rng), rng), "conv1d");
    MaxPool1d p(2);
    note(prim, worst_prim, grad_check(p, random_tensor({2, 8, 3}, rng), rng), "maxpool");
    BatchNorm1d bn(3, "bn");
    auto ps = bn.parameters();
    for (auto& v : ps[0]->value.values()) v = 0.5 + std::uniform_real_distribution<double>(0, 1)(rng);
    for (auto& v : ps[1]->value.values()) v = std::normal_distribution<double>(0, 1)(rng);
    note(prim, worst_prim, grad_check(bn, random_tensor({4, 6, 3}, rng), rng), "batchnorm");
    Dropout drop(0.3, seed);
    note(prim, worst_prim, grad_check(drop, random_tensor({3, 4}, rng), rng), "dropout");
    for (auto kind : {Activation::Tanh, Activation::Sigmoid, Activation::Relu}) {
      Elementwise a(kind);
      note(prim, worst_prim, grad_check(a, random_tensor({4, 7}, rng), rng), "activation");
    }
    for (bool reverse : {false, true}) {
      Lstm l(2, 3, reverse, "l", rng);
      note(prim, worst_prim, grad_check(l, random_tensor({2, 5, 2}, rng), rng), "lstm");
    }
    BiLstm bi(2, 3, "bi", rng);
    note(prim, worst_prim, grad_check(bi, random_tensor({2, 5, 2}, rng), rng), "bilstm");
    Tensor pred = random_tensor({4, 3}, rng, 1.5);
    const Tensor target = random_tensor({4, 3}, rng, 1.5);
    for (int which = 0; which < 2; ++which) {
      auto eval = [&] { return which == 0 ? huber(pred, target, 1.0) : mse(pred, target); };
      std::vector<GradTarget> t{{"pred", &pred, eval().grad}};
      note(prim, worst_prim, finite_difference_check([&] { return eval().value; }, t), which == 0 ? "huber" : "mse");
    }
  }

  // forecaster at default shape, sampled coordinates
  {
    forecast::ForecastModel m(4);
    std::mt19937_64 rng(31);
    GradCheckOptions opts;
    opts.max_coords_per_tensor = 40;
    note(full, worst_full, grad_check(m, random_tensor({2, 30, 2}, rng, 0.5), rng, opts), "forecaster");
  }
  // Q-network through the TD loss
  {
    ddqn::QNetwork net(env::kStateDim, 64, env::kActions, 5);
    std::mt19937_64 rng(32);
    std::vector<ddqn::Transition> ts(4);
    for (std::size_t k = 0; k < 4; ++k) {
      for (auto& v : ts[k].state) v = std::normal_distribution<double>(0, 1)(rng);
      ts[k].action = static_cast<std::uint32_t>(k % env::kActions);
    }
    std::vector<const ddqn::Transition*> batch;
    for (auto& t : ts) batch.push_back(&t);
    const std::vector<double> y{0.3, -0.2, 1.0, 0.5};
    net.zero_grad();
    ddqn::td_loss_backward<env::kStateDim>(net, batch, y);
    std::vector<GradTarget> targets;
    for (auto* p : net.parameters()) targets.push_back({p->name, &p->value, p->grad});
    auto loss = [&] {
      const nn::Tensor q = net.forward(ddqn::stack_states<env::kStateDim>(std::span<const ddqn::Transition* const>(batch), false));
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) {
        const double d = q[k * env::kActions + batch[k]->action] - y[k];
        s += d * d / 4.0;
      }
      return s;
    };
    note(full, worst_full, finite_difference_check(loss, targets), "qnetwork");
  }
  return {prim < 1e-4 && full < 1e-3,
          fmt("primitives max rel err %.3g (<1e-4, worst %s); full models %.3g (<1e-3, worst %s)", prim, worst_prim.c_str(), full,
              worst_full.c_str())};
}

// ---- 7: randomized environment steps ----

Verdict env_properties() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> regime(0, 3);
  std::uniform_int_distribution<std::uint64_t> small(0, 2'000), mid(0, 120'000), big(0, 400'000);
  traffic::TrafficTrace tr;
  for (std::size_t t = 0; t < 10'030; ++t) {
    switch (regime(rng)) {
      case 0: tr.slots.push_back({0, 0}); break;
      case 1: tr.slots.push_back({small(rng), small(rng)}); break;
      case 2: tr.slots.push_back({mid(rng), mid(rng)}); break;
      default: tr.slots.push_back({big(rng), mid(rng)}); break;
    }
  }
  env::ZeroSource src;
  const env::EnvConfig cfg;
  env::SbfdEnv e(tr, src, cfg);
  e.reset(30, 10'000);
  std::uniform_int_distribution<std::size_t> pick(0, env::kActions - 1);
  std::uint64_t q_ul = 0, q_dl = 0;
  std::size_t steps = 0, violations = 0;
  while (!e.done()) {
    const auto o = e.step(pick(rng));
    ++steps;
    bool ok = true;
    ok &= o.q_ul == q_ul + o.arr_ul && o.q_dl == q_dl + o.arr_dl;
    ok &= o.next_q_ul == o.q_ul - o.served_ul && o.next_q_dl == o.q_dl - o.served_dl;
    ok &= o.served_ul <= o.q_ul && o.served_dl <= o.q_dl;
    ok &= o.served_ul <= o.cap_ul && o.served_dl <= o.cap_dl;
    ok &= o.reward >= -1.0 && o.reward <= 1.0;
    ok &= (o.reward == 1.0) == (o.sat_ul == 1.0 && o.sat_dl == 1.0 && o.pen.total() == 0.0);
    if (!ok) ++violations;
    q_ul = o.next_q_ul;
    q_dl = o.next_q_dl;
  }
  const auto& acts = env::action_table();
  const double idle_best = env::serve_slot(cfg, 0, 0, acts[0], acts[0]).reward;
  std::size_t idle_bad = 0;
  for (std::size_t a = 1; a < env::kActions; ++a) idle_bad += env::serve_slot(cfg, 0, 0, acts[a], acts[0]).reward >= idle_best;
  return {steps == 10'000 && violations == 0 && idle_bad == 0,
          fmt("%zu random steps, %zu violations; idle enumeration: %zu actions tie or beat (40,60)", steps, violations, idle_bad)};
}

// ---- 9: double-Q decoupling toy ----

ddqn::QNetwork constant_head(double w0, double w1) {
  ddqn::QNetwork net(1, 1, 2, 0);
  net.layer(0).weight().value.fill(0.0);
  net.layer(0).bias().value.fill(1.0);
  net.layer(1).weight().value.fill(1.0);
  net.layer(1).bias().value.fill(0.0);
  net.layer(2).weight().value = nn::Tensor({1, 2}, {w0, w1});
  net.layer(2).bias().value.fill(0.0);
  return net;
}

Verdict double_q() {
  auto online = constant_head(1.0, 2.0);
  auto target = constant_head(10.0, 0.0);
  ddqn::BasicTransition<1> t;
  t.reward = 0.0;
  std::vector<const ddqn::BasicTransition<1>*> batch{&t};
  const double y = ddqn::td_targets<1>(batch, online, target, 1.0)[0];
  const double single = ddqn::td_targets<1>(batch, online, online, 1.0)[0];
  return {y == 0.0 && single == 2.0, fmt("double-Q target %g (expect 0), single-network target %g (expect 2)", y, single)};
}

// ---- 10: replay buffer and epsilon schedule ----

Verdict replay_epsilon() {
  ddqn::ReplayBuffer<ddqn::Transition> buf(100'000);
  std::size_t max_size = 0;
  for (std::size_t i = 0; i < 150'000; ++i) {
    ddqn::Transition t;
    t.reward = static_cast<double>(i);
    buf.push(t);
    max_size = std::max(max_size, buf.size());
  }
  bool fifo = true;
  for (std::size_t k = 0; k < buf.size(); k += 997) fifo &= buf.oldest(k).reward == static_cast<double>(50'000 + k);
  fifo &= buf.oldest(99'999).reward == 149'999.0;
  const ddqn::AgentConfig cfg;
  bool floor_ok = true;
  for (std::size_t e = 0; e < 10'000; ++e) floor_ok &= cfg.epsilon_at(e) >= cfg.eps_min;
  return {fifo && max_size == 100'000 && buf.size() == 100'000 && floor_ok,
          fmt("FIFO order %s after 150k pushes, peak size %zu (cap 100000), epsilon floor %s over 10k episodes", fifo ? "ok" : "BROKEN",
              max_size, floor_ok ? "held" : "VIOLATED")};
}

// ---- desk pipeline through the CLI entry point ----

int cli(const std::vector<std::string>& args, std::ostream& log) {
  std::vector<std::string> a{"sbfd"};
  a.insert(a.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : a) argv.push_back(s.data());
  log << "$ sbfd";
  for (std::size_t i = 1; i < a.size(); ++i) log << ' ' << a[i];
  log << '\n';
  const int rc = cli::cli_main(static_cast<int>(argv.size()), argv.data(), log, log);
  log.flush();
  return rc;
}

bool run_pipeline(const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream log(dir / "pipeline.log");
  auto p = [&](const char* f) { return (dir / f).string(); };
  const std::vector<std::pair<std::string, std::vector<std::string>>> steps{
      {"generate train trace", {"generate", "--out", p("train.csv"), "--slots", "100000", "--seed", "11"}},
      {"generate held-out trace", {"generate", "--out", p("test.csv"), "--slots", "100000", "--seed", "12"}},
      {"train forecaster (5 epochs)",
       {"train-forecaster", "--data", p("train.csv"), "--out", p("forecaster.ckpt"), "--epochs", "5", "--seed", "1", "--history",
        p("forecaster_history.csv")}},
      {"train DDQN (100 episodes)",
       {"train-agent", "--data", p("train.csv"), "--forecaster", p("forecaster.ckpt"), "--out", p("agent.ckpt"), "--episodes", "100",
        "--seed", "2", "--log", p("episodes.csv")}},
      {"train SAC-D", {"train-sacd", "--data", p("train.csv"), "--out", p("sacd.ckpt"), "--seed", "3", "--histogram", p("sacd_hist.csv")}},
      {"compare on held-out trace",
       {"compare", "--data", p("test.csv"), "--forecaster", p("forecaster.ckpt"), "--agent", p("agent.ckpt"), "--sacd", p("sacd.ckpt"),
        "--out", p("compare"), "--seed", "0"}},
  };
  for (const auto& [what, args] : steps) {
    progress(dir.filename().string() + ": " + what);
    if (cli(args, log) != 0) {
      progress("  step failed, see " + (dir / "pipeline.log").string());
      return false;
    }
  }
  return true;
}

using Report = std::map<std::string, double>;

Report read_report(const fs::path& p) {
  Report r;
  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    const auto c2 = line.rfind(',');
    r[line.substr(0, c2)] = std::stod(line.substr(c2 + 1));
  }
  return r;
}

double get(const Report& r, const std::string& key) {
  const auto it = r.find(key);
  return it == r.end() ? std::nan("") : it->second;
}

// ---- 2: forecaster on the desk test partition, plus an 800-slot stitch ----

Verdict forecaster_accuracy(const fs::path& dir) {
  auto model = forecast::load_forecaster(dir / "forecaster.ckpt");
  const auto tr = traffic::read_trace_csv(dir / "train.csv");
  const auto ds = traffic::make_windows(tr, model.normalizer);
  const auto mae = forecast::evaluate_mae(model, ds, model.normalizer);
  const std::size_t start = ds.first_target_slot(ds.partition.test.begin);
  const auto fc = forecast::stitched_forecast(model, tr, model.normalizer, start, 800);
  const auto fm = eval::forecast_metrics(tr, fc, 100'000.0);
  const bool point = mae.ul_bits < 5'000.0 && mae.dl_bits < 5'000.0;
  const bool stitch = fm.all_finite && fm.slots == 800 && fm.max_block_mae_pct < 10.0;
  return {point && stitch, fmt("test-partition MAE UL %.0f, DL %.0f bits/slot (<5000 each); stitched 800 slots from %zu: %s, "
                               "worst 100-slot block %.2f%% of C (<10%%), worst 10-slot window %.2f%%",
                               mae.ul_bits, mae.dl_bits, start, fm.all_finite ? "finite" : "NaN present", fm.max_block_mae_pct,
                               fm.max_window_mae_pct)};
}

Verdict ddqn_behaviour(const Report& r) {
  const double modal = get(r, "ddqn,peak_modal_ul_pct"), share = get(r, "ddqn,peak_modal_share");
  const double idle_sw = get(r, "ddqn,idle_switch_rate"), idle_modal = get(r, "ddqn,idle_modal_ul_pct");
  const bool ok = modal == 30.0 && share >= 0.70 && idle_sw < 0.05 && idle_modal == 40.0;
  return {ok, fmt("peak modal UL %.0f%% in %.1f%% of peak slots (want 30%% in >=70%%); idle switch rate %.2f%% (<5%%), idle modal UL "
                  "%.0f%% (want 40%%)",
                  modal, 100.0 * share, 100.0 * idle_sw, idle_modal)};
}

Verdict queue_reduction(const Report& r) {
  const double d = get(r, "ddqn,mean_queue_PEAK_ul"), s = get(r, "static,mean_queue_PEAK_ul");
  return {s > 0.0 && d <= 0.10 * s, fmt("peak mean UL queue DDQN %.0f vs static (20,80) %.0f bits, ratio %.3f (<=0.10)", d, s, d / s)};
}

Verdict throughput_gain(const Report& r) {
  const double dq = get(r, "ddqn,peak_dl_served_modal"), sc = get(r, "sacd,peak_dl_served_modal");
  const double gain = get(r, "ddqn,dl_gain_vs_sacd_pct");
  const double dq_ul = get(r, "ddqn,peak_modal_ul_pct"), sc_ul = get(r, "sacd,peak_modal_ul_pct");
  // the claim is about (30,70) against XXXXU; a gain produced by other actions does not count
  const bool actions = dq_ul == 30.0 && std::abs(sc_ul - 36.1) < 1e-3;
  return {actions && std::abs(gain - 14.9) <= 0.5,
          fmt("peak DL served at modal action: DDQN %.0f (UL %.0f%%), SAC-D %.0f (UL %.1f%%); gain %.2f%% (want 14.9 +- 0.5 with (30,70) vs "
              "XXXXU)",
              dq, dq_ul, sc, sc_ul, gain)};
}

Verdict sacd_pathology(const fs::path& hist) {
  std::ifstream is(hist);
  std::string line, best_name;
  double best = -1.0;
  std::string all;
  std::getline(is, line);
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string a, name, count, frac;
    std::getline(ss, a, ',');
    std::getline(ss, name, ',');
    std::getline(ss, count, ',');
    std::getline(ss, frac, ',');
    const double f = std::stod(frac);
    all += fmt(" %s=%.1f%%", name.c_str(), 100.0 * f);
    if (f > best) best = f, best_name = name;
  }
  return {best >= 0.90 && best_name == "XXXXU", fmt("greedy frame shares:%s (want XXXXU >= 90%%)", all.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("desk-scale acceptance run");
  std::string work = "acceptance_work";
  app.add_option("--work-dir", work, "scratch directory for the two pipeline runs");
  CLI11_PARSE(app, argc, argv);
  const fs::path root(work);
  fs::remove_all(root);
  fs::create_directories(root);

  std::map<int, Verdict> v;
  auto guard = [&](int id, auto fn) {
    try {
      v[id] = fn();
    } catch (const std::exception& e) {
      v[id] = {false, std::string("exception: ") + e.what()};
    }
  };

  progress("criterion 1: gradient checks");
  guard(1, gradient_suite);
  progress("criterion 7: environment properties");
  guard(7, env_properties);
  guard(9, double_q);
  progress("criterion 10: replay buffer");
  guard(10, replay_epsilon);

  const fs::path run1 = root / "run1", run2 = root / "run2";
  const bool ok1 = run_pipeline(run1);
  if (ok1) {
    const auto rep = read_report(run1 / "compare" / "report.csv");
    guard(2, [&] { return forecaster_accuracy(run1); });
    guard(3, [&] { return ddqn_behaviour(rep); });
    guard(4, [&] { return queue_reduction(rep); });
    guard(5, [&] { return throughput_gain(rep); });
    guard(6, [&] { return sacd_pathology(run1 / "sacd_hist.csv"); });
  } else {
    for (int id : {2, 3, 4, 5, 6}) v[id] = {false, "pipeline run failed"};
  }
  const bool ok2 = run_pipeline(run2);
  {
    const auto a = slurp(run1 / "compare" / "report.csv"), b = slurp(run2 / "compare" / "report.csv");
    const bool same = ok1 && ok2 && !a.empty() && a == b;
    v[8] = {same, fmt("report.csv from two seeded runs: %zu vs %zu bytes, %s", a.size(), b.size(), same ? "identical" : "DIFFERENT")};
  }

  bool all = true;
  for (int id = 1; id <= 10; ++id) {
    const auto& r = v[id];
    all &= r.pass;
    std::printf("criterion %2d: %s  %s\n", id, r.pass ? "PASS" : "FAIL", r.detail.c_str());
  }
  std::fflush(stdout);
  return all ? 0 : 1;
}
