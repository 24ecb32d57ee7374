#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sbfd/eval.hpp"
#include "test_util.hpp"

using namespace sbfd;
using namespace sbfd::eval;
using sbfd::testing::kind_of;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::filesystem::path& p) {
  const auto s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

struct Fixture {
  traffic::TrafficTrace tr = traffic::generate_trace(traffic::default_chain(), 3'000, 41);
  forecast::ForecastModel fc{1};
  ddqn::QNetwork q{env::kStateDim, 64, env::kActions, 2};
  baselines::SacdPolicy sacd{ddqn::QNetwork(baselines::kSacdStateDim, 64, baselines::kFrames, 3)};

  Fixture() { fc.normalizer = traffic::fit_normalizer(tr, {0, tr.size()}); }

  CompareResult run(std::size_t first = 100, std::size_t last = 2'600) {
    CompareInputs in;
    in.forecaster = &fc;
    in.ddqn = &q;
    in.sacd = &sacd;
    return run_compare(tr, in, first, last);
  }
};

}  // namespace

TEST(Annotate, UsesHiddenStatesWhenPresent) {
  const auto tr = traffic::generate_trace(traffic::default_chain(), 2'000, 5);
  const auto a = annotate(tr, 10, 1'500, 1e5);
  EXPECT_TRUE(a.from_states);
  for (std::size_t t = 10; t < 1'500; ++t) EXPECT_EQ(static_cast<std::size_t>(a.at(t)), tr.states[t]);
  std::size_t covered = 0;
  const auto ranges = a.ranges();
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    covered += ranges[i].end - ranges[i].begin;
    if (i) {
      EXPECT_EQ(ranges[i].begin, ranges[i - 1].end);
      EXPECT_NE(ranges[i].phase, ranges[i - 1].phase);
    }
  }
  EXPECT_EQ(covered, 1'490u);
}

TEST(Annotate, ThresholdFallback) {
  traffic::TrafficTrace tr;
  tr.slots = {{30'000, 80'000}, {100, 200}, {12'000, 35'000}, {26'000, 0}, {4'000, 999}};
  const auto a = annotate(tr, 0, 5, 1e5);
  EXPECT_FALSE(a.from_states);
  EXPECT_EQ(a.phase, (std::vector<Phase>{Phase::Peak, Phase::Idle, Phase::Mid, Phase::Peak, Phase::Idle}));
  EXPECT_EQ(kind_of([&] { annotate(tr, 0, 6, 1e5); }), ErrorKind::InsufficientTrace);
}

// Three PEAK slots then two IDLE slots, checked against hand arithmetic.
TEST(Metrics, HandComputedScenario) {
  CompareResult r;
  r.first = 0;
  r.last = 5;
  r.phases.phase = {Phase::Peak, Phase::Peak, Phase::Peak, Phase::Idle, Phase::Idle};
  r.d_ul = {30'000, 30'000, 30'000, 0, 0};
  r.d_dl = {80'000, 80'000, 80'000, 0, 0};
  auto row = [](std::size_t a, double ul, std::uint64_t q_ul, std::uint64_t s_ul, std::uint64_t s_dl) {
    return SlotRow{a, ul, 100.0 - ul, q_ul, 0, s_ul, s_dl};
  };
  r.ddqn.name = "ddqn";
  r.ddqn.rows = {row(1, 30, 0, 30'000, 70'000), row(1, 30, 0, 30'000, 70'000), row(3, 10, 20'000, 10'000, 80'000),
                 row(0, 40, 20'000, 0, 0), row(0, 40, 20'000, 0, 0)};
  r.stat.name = "static";
  r.stat.rows = {row(0, 20, 10'000, 20'000, 80'000), row(0, 20, 20'000, 20'000, 80'000), row(0, 20, 30'000, 20'000, 80'000),
                 row(0, 20, 10'000, 20'000, 0), row(0, 20, 0, 10'000, 0)};
  r.sacd.name = "sacd";
  r.sacd.queued = false;
  r.sacd.rows = {row(1, 36.1, 0, 30'000, 60'900), row(1, 36.1, 0, 30'000, 60'900), row(2, 32.1, 0, 30'000, 65'700),
                 row(0, 20.1, 0, 0, 0), row(0, 20.1, 0, 0, 0)};
  traffic::TrafficTrace tr;
  tr.slots.assign(5, {0, 0});
  const auto rep = build_report(r, tr, 1e5);
  const auto& d = rep.schedulers[0];
  EXPECT_EQ(d.peak_slots, 3u);
  EXPECT_EQ(d.idle_slots, 2u);
  EXPECT_DOUBLE_EQ(d.queue[0][0].mean_q, 20'000.0 / 3.0);
  EXPECT_EQ(d.queue[0][0].max_q, 20'000.0);
  EXPECT_DOUBLE_EQ(d.peak_ul_util_pct, 100.0 * 70'000.0 / 90'000.0);
  EXPECT_DOUBLE_EQ(d.peak_dl_served, 220'000.0 / 3.0);
  EXPECT_EQ(d.peak_modal_ul_pct, 30.0);
  EXPECT_DOUBLE_EQ(d.peak_modal_share, 2.0 / 3.0);
  EXPECT_EQ(d.peak_dl_served_modal, 70'000.0);
  EXPECT_EQ(d.idle_modal_ul_pct, 40.0);
  EXPECT_EQ(d.idle_switch_rate, 0.5);  // the 3 -> 0 change lands on the first idle slot
  EXPECT_EQ(d.switch_rate, 2.0 / 5.0);
  EXPECT_DOUBLE_EQ(d.peak_ul_queue_reduction_pct, 100.0 * (1.0 - 20'000.0 / 60'000.0));
  EXPECT_TRUE(std::isnan(rep.schedulers[2].peak_ul_queue_reduction_pct));
  EXPECT_DOUBLE_EQ(rep.schedulers[2].peak_ul_util_pct, 100.0 * 60'000.0 / 90'000.0);
  EXPECT_EQ(rep.schedulers[1].peak_dl_served_modal, 60'900.0);
  EXPECT_DOUBLE_EQ(rep.dl_gain_vs_sacd_pct, 100.0 * (70'000.0 - 60'900.0) / 60'900.0);
  EXPECT_EQ(rep.dl_gain_vs_sacd_bits, 9'100.0);
}

TEST(Forecast, BlockAndWindowErrors) {
  traffic::TrafficTrace tr;
  tr.slots.assign(200, {1'000, 2'000});
  std::vector<forecast::SlotForecast> fc;
  for (std::size_t t = 0; t < 200; ++t) fc.push_back({t, t < 10 ? 11'000.0 : 1'000.0, 2'000.0});
  const auto f = forecast_metrics(tr, fc, 1e5);
  EXPECT_EQ(f.slots, 200u);
  EXPECT_TRUE(f.all_finite);
  EXPECT_DOUBLE_EQ(f.mae.ul_bits, 10.0 * 10'000.0 / 200.0);
  EXPECT_EQ(f.mae.dl_bits, 0.0);
  // first 10-slot window: 10k UL error per slot pooled with zero DL error -> 5% of C
  EXPECT_DOUBLE_EQ(f.max_window_mae_pct, 5.0);
  EXPECT_DOUBLE_EQ(f.max_block_mae_pct, 0.5);
  fc[150].dl_bits = std::nan("");
  EXPECT_FALSE(forecast_metrics(tr, fc, 1e5).all_finite);
}

TEST(Compare, SeriesAgreeWithReport) {
  Fixture fx;
  const auto r = fx.run();
  const std::size_t n = 2'500;
  ASSERT_EQ(r.ddqn.rows.size(), n);
  ASSERT_EQ(r.sacd.rows.size(), n);
  ASSERT_EQ(r.stat.rows.size(), n);
  EXPECT_TRUE(r.report.common_input);
  EXPECT_EQ(r.stitched.size(), n);

  const std::set<double> ddqn_ul{0, 10, 20, 30, 40};
  std::set<double> sacd_ul;
  for (const auto& f : fx.sacd.frames) sacd_ul.insert(100.0 * f.ul_frac);
  double peak_q_static = 0.0, peak_q_ddqn = 0.0;
  std::size_t peaks = 0;
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_TRUE(ddqn_ul.count(r.ddqn.rows[i].alloc_ul_pct));
    EXPECT_TRUE(sacd_ul.count(r.sacd.rows[i].alloc_ul_pct));
    EXPECT_EQ(r.stat.rows[i].alloc_ul_pct, 20.0);
    EXPECT_EQ(r.ddqn.rows[i].alloc_ul_pct + r.ddqn.rows[i].alloc_dl_pct, 100.0);
    EXPECT_EQ(r.sacd.rows[i].q_ul, 0u);
    if (r.phases.phase[i] == Phase::Peak) {
      ++peaks;
      peak_q_static += static_cast<double>(r.stat.rows[i].q_ul);
      peak_q_ddqn += static_cast<double>(r.ddqn.rows[i].q_ul);
    }
  }
  ASSERT_GT(peaks, 0u);
  EXPECT_EQ(r.report.schedulers[2].peak_slots, peaks);
  EXPECT_NEAR(r.report.schedulers[2].queue[0][0].mean_q, peak_q_static / static_cast<double>(peaks), 1e-9 * peak_q_static);
  EXPECT_NEAR(r.report.schedulers[0].peak_ul_queue_reduction_pct, 100.0 * (1.0 - peak_q_ddqn / peak_q_static), 1e-9);
}

TEST(Compare, OutputsAndDeterminism) {
  const auto dir = std::filesystem::temp_directory_path() / "sbfd_test_eval";
  std::filesystem::remove_all(dir);
  Fixture fx;
  const auto r1 = fx.run();
  const auto r2 = fx.run();
  write_report_csv(dir / "a.csv", r1.report);
  write_report_csv(dir / "b.csv", r2.report);
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  EXPECT_EQ(slurp(dir / "a.csv").substr(0, 22), "scheduler,metric,value");

  emit_plots(dir, fx.tr, r1);
  EXPECT_EQ(line_count(dir / "fig3_forecast.csv"), 801u);
  EXPECT_EQ(line_count(dir / "fig4_ul_allocation.csv"), 2001u);
  EXPECT_EQ(line_count(dir / "fig5_dl_allocation.csv"), 2001u);
  EXPECT_TRUE(std::filesystem::exists(dir / "columns.txt"));
  write_series(dir, r1);
  for (const char* s : {"ddqn", "sacd", "static"}) {
    EXPECT_EQ(line_count(dir / (std::string("series_") + s + "_ul.csv")), 2'501u);
    EXPECT_EQ(line_count(dir / (std::string("series_") + s + "_dl.csv")), 2'501u);
  }
  std::ostringstream os;
  print_report(os, r1.report);
  EXPECT_NE(os.str().find("DL gain vs SAC-D"), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(Compare, RangeErrors) {
  Fixture fx;
  EXPECT_EQ(kind_of([&] { fx.run(10, 500); }), ErrorKind::InsufficientTrace);
  EXPECT_EQ(kind_of([&] { fx.run(100, 3'001); }), ErrorKind::InsufficientTrace);
  CompareInputs none;
  EXPECT_EQ(kind_of([&] { run_compare(fx.tr, none, 100, 200); }), ErrorKind::InvalidArgument);
}
