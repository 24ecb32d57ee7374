#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "sbfd/baselines.hpp"
#include "sbfd/csv.hpp"
#include "sbfd/ddqn.hpp"
#include "sbfd/env.hpp"
#include "sbfd/forecaster.hpp"
#include "sbfd/traffic.hpp"

namespace sbfd::eval {

enum class Phase : std::uint8_t { Peak = 0, Idle = 1, Mid = 2, Other = 3 };
inline constexpr std::array<const char*, 4> kPhaseNames{"PEAK", "IDLE", "MID", "OTHER"};

inline const char* to_string(Phase p) { return kPhaseNames[static_cast<std::size_t>(p)]; }

inline Phase phase_from_label(const std::string& label) {
  for (std::size_t i = 0; i < 3; ++i) {
    if (label == kPhaseNames[i]) return static_cast<Phase>(i);
  }
  return Phase::Other;
}

struct PhaseRange {
  Phase phase;
  std::size_t begin, end;  // slots, half-open
};

struct PhaseAnnotation {
  std::size_t first = 0;
  std::vector<Phase> phase;  // phase[t - first]
  bool from_states = false;

  Phase at(std::size_t slot) const { return phase.at(slot - first); }

  std::vector<PhaseRange> ranges() const {
    std::vector<PhaseRange> out;
    for (std::size_t i = 0; i < phase.size(); ++i) {
      if (out.empty() || out.back().phase != phase[i]) out.push_back({phase[i], first + i, first + i});
      out.back().end = first + i + 1;
    }
    return out;
  }
};

// Hidden chain state when the trace carries it; otherwise demand thresholds
// (UL > 0.25 C is PEAK, UL + DL < 0.05 C is IDLE, anything else MID).
inline PhaseAnnotation annotate(const traffic::TrafficTrace& tr, std::size_t first, std::size_t last, double capacity) {
  require(first <= last && last <= tr.size(), ErrorKind::InsufficientTrace, "annotation range outside trace");
  PhaseAnnotation a;
  a.first = first;
  a.from_states = tr.has_states();
  a.phase.reserve(last - first);
  for (std::size_t t = first; t < last; ++t) {
    if (a.from_states) {
      const std::size_t s = tr.states[t];
      a.phase.push_back(s < tr.state_labels.size() ? phase_from_label(tr.state_labels[s]) : Phase::Other);
    } else {
      const double ul = static_cast<double>(tr[t].ul), dl = static_cast<double>(tr[t].dl);
      a.phase.push_back(ul > 0.25 * capacity ? Phase::Peak : ul + dl < 0.05 * capacity ? Phase::Idle : Phase::Mid);
    }
  }
  return a;
}

struct SlotRow {
  std::size_t action = 0;
  double alloc_ul_pct = 0.0;
  double alloc_dl_pct = 0.0;
  std::uint64_t q_ul = 0, q_dl = 0;  // carried into the next slot
  std::uint64_t served_ul = 0, served_dl = 0;
};

struct SchedulerRun {
  std::string name;
  bool queued = true;
  std::vector<SlotRow> rows;
  std::uint64_t demand_hash = 0;
};

struct DirStats {
  double mean_q = 0.0;
  double max_q = 0.0;
};

struct SchedulerMetrics {
  std::string name;
  std::array<std::array<DirStats, 2>, 3> queue{};  // [phase][direction]
  double peak_ul_util_pct = 0.0;
  double peak_dl_served = 0.0;        // mean over all PEAK slots
  double peak_dl_served_modal = 0.0;  // mean over PEAK slots that used the modal PEAK action
  double peak_modal_ul_pct = 0.0;
  double peak_modal_share = 0.0;
  double idle_modal_ul_pct = 0.0;
  double idle_modal_share = 0.0;
  double idle_switch_rate = 0.0;
  double switch_rate = 0.0;
  double peak_ul_queue_reduction_pct = 0.0;  // vs static; NaN for the static run itself
  std::size_t peak_slots = 0, idle_slots = 0;
};

struct ForecastMetrics {
  forecast::MaeReport mae;
  double max_block_mae_pct = 0.0;   // 100-slot blocks, both directions pooled
  double max_window_mae_pct = 0.0;  // single 10-slot windows, both directions pooled
  bool all_finite = true;
  std::size_t slots = 0;
};

struct EvalReport {
  std::vector<SchedulerMetrics> schedulers;  // ddqn, sacd, static
  double dl_gain_vs_sacd_pct = 0.0;          // modal-action PEAK means
  double dl_gain_vs_sacd_bits = 0.0;
  double dl_gain_vs_sacd_all_pct = 0.0;      // all PEAK slots
  bool common_input = true;
  ForecastMetrics forecast;
};

struct CompareResult {
  std::size_t first = 0, last = 0;
  PhaseAnnotation phases;
  std::vector<std::uint64_t> d_ul, d_dl;
  SchedulerRun ddqn, sacd, stat;
  std::vector<forecast::SlotForecast> stitched;
  EvalReport report;
};

namespace detail {

inline std::uint64_t demand_hash(const traffic::TrafficTrace& tr, std::size_t first, std::size_t last) {
  Fnv1a h;
  for (std::size_t t = first; t < last; ++t) {
    h.add(tr[t].ul);
    h.add(tr[t].dl);
  }
  return h.value();
}

inline SlotRow row_from(const env::StepOutcome& o, std::size_t action) {
  return {action, static_cast<double>(o.split.ul_pct), static_cast<double>(o.split.dl_pct), o.next_q_ul, o.next_q_dl, o.served_ul,
          o.served_dl};
}

}  // namespace detail

inline SchedulerMetrics scheduler_metrics(const CompareResult& r, const SchedulerRun& run, const SchedulerRun* baseline) {
  SchedulerMetrics m;
  m.name = run.name;
  const std::size_t n = run.rows.size();
  std::array<std::array<double, 2>, 3> sum{};
  std::array<std::size_t, 3> cnt{};
  std::map<std::size_t, std::size_t> peak_actions, idle_actions;
  double peak_ul_served = 0.0, peak_ul_demand = 0.0;
  std::size_t switches = 0, idle_switches = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = run.rows[i];
    const Phase ph = r.phases.phase[i];
    if (i > 0 && run.rows[i - 1].action != row.action) {
      ++switches;
      if (ph == Phase::Idle) ++idle_switches;
    }
    if (ph == Phase::Other) continue;
    const auto p = static_cast<std::size_t>(ph);
    ++cnt[p];
    const double q[2] = {static_cast<double>(row.q_ul), static_cast<double>(row.q_dl)};
    for (std::size_t d = 0; d < 2; ++d) {
      sum[p][d] += q[d];
      m.queue[p][d].max_q = std::max(m.queue[p][d].max_q, q[d]);
    }
    if (ph == Phase::Peak) {
      ++peak_actions[row.action];
      peak_ul_served += static_cast<double>(row.served_ul);
      peak_ul_demand += static_cast<double>(r.d_ul[i]);
      m.peak_dl_served += static_cast<double>(row.served_dl);
    } else if (ph == Phase::Idle) {
      ++idle_actions[row.action];
    }
  }
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t d = 0; d < 2; ++d) m.queue[p][d].mean_q = cnt[p] ? sum[p][d] / static_cast<double>(cnt[p]) : 0.0;
  }
  m.peak_slots = cnt[0];
  m.idle_slots = cnt[1];
  m.switch_rate = n ? static_cast<double>(switches) / static_cast<double>(n) : 0.0;
  m.idle_switch_rate = cnt[1] ? static_cast<double>(idle_switches) / static_cast<double>(cnt[1]) : 0.0;
  m.peak_ul_util_pct = peak_ul_demand > 0.0 ? std::min(100.0, 100.0 * peak_ul_served / peak_ul_demand) : 100.0;

  auto modal = [](const std::map<std::size_t, std::size_t>& h) {
    std::size_t best = 0, count = 0;
    for (const auto& [a, c] : h) {
      if (c > count) best = a, count = c;
    }
    return std::pair{best, count};
  };
  auto ul_pct_of = [&](std::size_t action) {
    for (const auto& row : run.rows) {
      if (row.action == action) return row.alloc_ul_pct;
    }
    return 0.0;
  };
  if (cnt[0]) {
    m.peak_dl_served /= static_cast<double>(cnt[0]);
    const auto [a, c] = modal(peak_actions);
    m.peak_modal_ul_pct = ul_pct_of(a);
    m.peak_modal_share = static_cast<double>(c) / static_cast<double>(cnt[0]);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (r.phases.phase[i] == Phase::Peak && run.rows[i].action == a) s += static_cast<double>(run.rows[i].served_dl);
    }
    m.peak_dl_served_modal = s / static_cast<double>(c);
  }
  if (cnt[1]) {
    const auto [a, c] = modal(idle_actions);
    m.idle_modal_ul_pct = ul_pct_of(a);
    m.idle_modal_share = static_cast<double>(c) / static_cast<double>(cnt[1]);
  }
  if (baseline && baseline != &run) {
    double mine = 0.0, theirs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (r.phases.phase[i] != Phase::Peak) continue;
      mine += static_cast<double>(run.rows[i].q_ul);
      theirs += static_cast<double>(baseline->rows[i].q_ul);
    }
    m.peak_ul_queue_reduction_pct = theirs > 0.0 ? 100.0 * (1.0 - mine / theirs) : 0.0;
  } else {
    m.peak_ul_queue_reduction_pct = std::nan("");
  }
  return m;
}

inline ForecastMetrics forecast_metrics(const traffic::TrafficTrace& tr, const std::vector<forecast::SlotForecast>& fc,
                                        double capacity, std::size_t horizon = 10, std::size_t block = 100) {
  ForecastMetrics f;
  f.slots = fc.size();
  if (fc.empty()) return f;
  double s_ul = 0.0, s_dl = 0.0, win = 0.0, blk = 0.0;
  std::size_t in_win = 0, in_blk = 0;
  for (const auto& p : fc) {
    if (!std::isfinite(p.ul_bits) || !std::isfinite(p.dl_bits)) f.all_finite = false;
    const double e_ul = std::abs(p.ul_bits - static_cast<double>(tr[p.slot].ul));
    const double e_dl = std::abs(p.dl_bits - static_cast<double>(tr[p.slot].dl));
    s_ul += e_ul;
    s_dl += e_dl;
    win += e_ul + e_dl;
    blk += e_ul + e_dl;
    if (++in_win == horizon) {
      f.max_window_mae_pct = std::max(f.max_window_mae_pct, 100.0 * win / (2.0 * static_cast<double>(horizon)) / capacity);
      win = 0.0;
      in_win = 0;
    }
    if (++in_blk == block) {
      f.max_block_mae_pct = std::max(f.max_block_mae_pct, 100.0 * blk / (2.0 * static_cast<double>(block)) / capacity);
      blk = 0.0;
      in_blk = 0;
    }
  }
  if (in_blk) f.max_block_mae_pct = std::max(f.max_block_mae_pct, 100.0 * blk / (2.0 * static_cast<double>(in_blk)) / capacity);
  const double n = static_cast<double>(fc.size());
  f.mae.ul_bits = s_ul / n;
  f.mae.dl_bits = s_dl / n;
  f.mae.ul_pct = 100.0 * f.mae.ul_bits / capacity;
  f.mae.dl_pct = 100.0 * f.mae.dl_bits / capacity;
  return f;
}

inline EvalReport build_report(const CompareResult& r, const traffic::TrafficTrace& tr, double capacity) {
  EvalReport rep;
  rep.schedulers.push_back(scheduler_metrics(r, r.ddqn, &r.stat));
  rep.schedulers.push_back(scheduler_metrics(r, r.sacd, &r.stat));
  rep.schedulers.push_back(scheduler_metrics(r, r.stat, &r.stat));
  const auto& dq = rep.schedulers[0];
  const auto& sc = rep.schedulers[1];
  rep.dl_gain_vs_sacd_bits = dq.peak_dl_served_modal - sc.peak_dl_served_modal;
  rep.dl_gain_vs_sacd_pct = sc.peak_dl_served_modal > 0.0 ? 100.0 * rep.dl_gain_vs_sacd_bits / sc.peak_dl_served_modal : 0.0;
  rep.dl_gain_vs_sacd_all_pct = sc.peak_dl_served > 0.0 ? 100.0 * (dq.peak_dl_served / sc.peak_dl_served - 1.0) : 0.0;
  rep.common_input = r.ddqn.demand_hash == r.sacd.demand_hash && r.sacd.demand_hash == r.stat.demand_hash;
  rep.forecast = forecast_metrics(tr, r.stitched, capacity);
  return rep;
}

struct CompareInputs {
  forecast::ForecastModel* forecaster = nullptr;
  ddqn::QNetwork* ddqn = nullptr;
  baselines::SacdPolicy* sacd = nullptr;
  env::Split static_split{20, 80};
  env::EnvConfig env;
};

// All three schedulers over slots [first, last) of one trace. DDQN and static run one continuous
// queued episode each; SAC-D runs the queue-less frame environment.
inline CompareResult run_compare(const traffic::TrafficTrace& tr, CompareInputs in, std::size_t first, std::size_t last) {
  require(in.forecaster && in.ddqn && in.sacd, ErrorKind::InvalidArgument, "compare needs a forecaster, a DDQN policy and a SAC-D policy");
  const std::size_t lookback = in.forecaster->arch().lookback;
  require(first >= lookback && first < last && last <= tr.size(), ErrorKind::InsufficientTrace,
          "compare range [" + std::to_string(first) + ", " + std::to_string(last) + ") does not fit a trace of " +
              std::to_string(tr.size()) + " slots with " + std::to_string(lookback) + " history slots");
  CompareResult r;
  r.first = first;
  r.last = last;
  r.phases = annotate(tr, first, last, in.env.capacity);
  for (std::size_t t = first; t < last; ++t) {
    r.d_ul.push_back(tr[t].ul);
    r.d_dl.push_back(tr[t].dl);
  }

  {
    const forecast::ForecastTable table(*in.forecaster, tr, first, last);
    env::TableSource src(table);
    env::SbfdEnv e(tr, src, in.env);
    auto s = e.reset(first, last - first);
    r.ddqn.name = "ddqn";
    r.ddqn.demand_hash = detail::demand_hash(tr, first, last);
    while (!e.done()) {
      const std::size_t a = ddqn::argmax(in.ddqn->q_values(s.v));
      const auto o = e.step(a);
      r.ddqn.rows.push_back(detail::row_from(o, a));
      s = o.next_state;
    }
  }

  {
    r.stat.name = "static";
    r.stat.demand_hash = detail::demand_hash(tr, first, last);
    for (const auto& o : baselines::static_run(tr, in.static_split, in.env, first, last)) r.stat.rows.push_back(detail::row_from(o, 0));
  }

  {
    r.sacd.name = "sacd";
    r.sacd.queued = false;
    r.sacd.demand_hash = detail::demand_hash(tr, first, last);
    auto& pol = *in.sacd;
    const auto recs = baselines::sacd_rollout(tr, first, last, pol.frames, in.env.capacity, pol.episode_len,
                                              [&](const baselines::SacdState& s) { return pol.act(s); });
    for (const auto& fr : recs) {
      const auto& f = pol.frames[fr.action];
      r.sacd.rows.push_back({fr.action, 100.0 * f.ul_frac, 100.0 * f.dl_frac, 0, 0, fr.served_ul, fr.served_dl});
    }
  }

  const std::size_t h = in.forecaster->arch().horizon;
  const std::size_t span = (last - first) / h * h;
  if (span > 0) r.stitched = forecast::stitched_forecast(*in.forecaster, tr, in.forecaster->normalizer, first, span);
  r.report = build_report(r, tr, in.env.capacity);
  return r;
}

// ---- output -------------------------------------------------------------

inline void write_report_csv(const std::filesystem::path& path, const EvalReport& rep) {
  auto os = open_csv(path);
  os << "scheduler,metric,value\n";
  auto put = [&](const std::string& who, const std::string& metric, double v) { os << who << ',' << metric << ',' << fmt_num(v) << '\n'; };
  for (const auto& m : rep.schedulers) {
    for (std::size_t p = 0; p < 3; ++p) {
      for (std::size_t d = 0; d < 2; ++d) {
        const std::string key = std::string(kPhaseNames[p]) + (d == 0 ? "_ul" : "_dl");
        put(m.name, "mean_queue_" + key, m.queue[p][d].mean_q);
        put(m.name, "max_queue_" + key, m.queue[p][d].max_q);
      }
    }
    put(m.name, "peak_slots", static_cast<double>(m.peak_slots));
    put(m.name, "idle_slots", static_cast<double>(m.idle_slots));
    put(m.name, "peak_ul_utilization_pct", m.peak_ul_util_pct);
    put(m.name, "peak_dl_served", m.peak_dl_served);
    put(m.name, "peak_dl_served_modal", m.peak_dl_served_modal);
    put(m.name, "peak_modal_ul_pct", m.peak_modal_ul_pct);
    put(m.name, "peak_modal_share", m.peak_modal_share);
    put(m.name, "idle_modal_ul_pct", m.idle_modal_ul_pct);
    put(m.name, "idle_modal_share", m.idle_modal_share);
    put(m.name, "idle_switch_rate", m.idle_switch_rate);
    put(m.name, "switch_rate", m.switch_rate);
    put(m.name, "peak_ul_queue_reduction_pct", m.peak_ul_queue_reduction_pct);
  }
  put("ddqn", "dl_gain_vs_sacd_pct", rep.dl_gain_vs_sacd_pct);
  put("ddqn", "dl_gain_vs_sacd_bits", rep.dl_gain_vs_sacd_bits);
  put("ddqn", "dl_gain_vs_sacd_all_pct", rep.dl_gain_vs_sacd_all_pct);
  put("all", "common_input", rep.common_input ? 1.0 : 0.0);
  put("forecaster", "mae_ul_bits", rep.forecast.mae.ul_bits);
  put("forecaster", "mae_dl_bits", rep.forecast.mae.dl_bits);
  put("forecaster", "mae_ul_pct", rep.forecast.mae.ul_pct);
  put("forecaster", "mae_dl_pct", rep.forecast.mae.dl_pct);
  put("forecaster", "max_block_mae_pct", rep.forecast.max_block_mae_pct);
  put("forecaster", "max_window_mae_pct", rep.forecast.max_window_mae_pct);
  put("forecaster", "all_finite", rep.forecast.all_finite ? 1.0 : 0.0);
  close_csv(os, path);
}

inline void print_report(std::ostream& os, const EvalReport& rep) {
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %14s %14s %14s\n", "metric", "ddqn", "sacd", "static");
  os << line;
  auto row = [&](const char* label, auto get) {
    std::snprintf(line, sizeof line, "%-28s %14.2f %14.2f %14.2f\n", label, get(rep.schedulers[0]), get(rep.schedulers[1]),
                  get(rep.schedulers[2]));
    os << line;
  };
  row("peak mean UL queue (bits)", [](const SchedulerMetrics& m) { return m.queue[0][0].mean_q; });
  row("peak mean DL queue (bits)", [](const SchedulerMetrics& m) { return m.queue[0][1].mean_q; });
  row("peak max UL queue (bits)", [](const SchedulerMetrics& m) { return m.queue[0][0].max_q; });
  row("peak UL utilization (%)", [](const SchedulerMetrics& m) { return m.peak_ul_util_pct; });
  row("peak DL served (bits/slot)", [](const SchedulerMetrics& m) { return m.peak_dl_served; });
  row("peak DL served, modal", [](const SchedulerMetrics& m) { return m.peak_dl_served_modal; });
  row("peak modal UL (%)", [](const SchedulerMetrics& m) { return m.peak_modal_ul_pct; });
  row("peak modal share", [](const SchedulerMetrics& m) { return m.peak_modal_share; });
  row("idle modal UL (%)", [](const SchedulerMetrics& m) { return m.idle_modal_ul_pct; });
  row("idle switch rate", [](const SchedulerMetrics& m) { return m.idle_switch_rate; });
  row("switch rate", [](const SchedulerMetrics& m) { return m.switch_rate; });
  row("UL queue reduction vs static", [](const SchedulerMetrics& m) { return m.peak_ul_queue_reduction_pct; });
  std::snprintf(line, sizeof line, "DL gain vs SAC-D at peak: %.2f%% (%.0f bits/slot)\n", rep.dl_gain_vs_sacd_pct,
                rep.dl_gain_vs_sacd_bits);
  os << line;
  std::snprintf(line, sizeof line, "forecaster MAE: UL %.0f bits (%.2f%%), DL %.0f bits (%.2f%%), worst 100-slot block %.2f%%\n",
                rep.forecast.mae.ul_bits, rep.forecast.mae.ul_pct, rep.forecast.mae.dl_bits, rep.forecast.mae.dl_pct,
                rep.forecast.max_block_mae_pct);
  os << line;
}

inline void write_forecast_csv(const std::filesystem::path& path, const traffic::TrafficTrace& tr,
                               const std::vector<forecast::SlotForecast>& fc, std::size_t limit = SIZE_MAX) {
  auto os = open_csv(path);
  os << "slot,pred_ul_bits,pred_dl_bits,true_ul_bits,true_dl_bits\n";
  for (std::size_t i = 0; i < fc.size() && i < limit; ++i) {
    const auto& p = fc[i];
    os << p.slot << ',' << fmt_num(p.ul_bits) << ',' << fmt_num(p.dl_bits) << ',' << tr[p.slot].ul << ',' << tr[p.slot].dl << '\n';
  }
  close_csv(os, path);
}

// series_<scheduler>_<ul|dl>.csv
inline void write_series(const std::filesystem::path& dir, const CompareResult& r) {
  for (const SchedulerRun* run : {&r.ddqn, &r.sacd, &r.stat}) {
    for (int d = 0; d < 2; ++d) {
      const auto path = dir / ("series_" + run->name + (d == 0 ? "_ul.csv" : "_dl.csv"));
      auto os = open_csv(path);
      os << "slot,demand,alloc_pct,queue,served,phase\n";
      for (std::size_t i = 0; i < run->rows.size(); ++i) {
        const auto& row = run->rows[i];
        os << r.first + i << ',' << (d == 0 ? r.d_ul[i] : r.d_dl[i]) << ',' << fmt_num(d == 0 ? row.alloc_ul_pct : row.alloc_dl_pct) << ','
           << (d == 0 ? row.q_ul : row.q_dl) << ',' << (d == 0 ? row.served_ul : row.served_dl) << ',' << to_string(r.phases.phase[i])
           << '\n';
      }
      close_csv(os, path);
    }
  }
}

struct PlotOptions {
  std::size_t forecast_slots = 800;
  std::size_t allocation_slots = 2000;
};

// fig3_forecast.csv, fig4_ul_allocation.csv, fig5_dl_allocation.csv and a columns.txt description.
inline void emit_plots(const std::filesystem::path& dir, const traffic::TrafficTrace& tr, const CompareResult& r, PlotOptions opt = {}) {
  require(!r.ddqn.rows.empty(), ErrorKind::InvalidArgument, "no series to plot");
  write_forecast_csv(dir / "fig3_forecast.csv", tr, r.stitched, opt.forecast_slots);
  const std::size_t n = std::min(opt.allocation_slots, r.ddqn.rows.size());
  for (int d = 0; d < 2; ++d) {
    const auto path = dir / (d == 0 ? "fig4_ul_allocation.csv" : "fig5_dl_allocation.csv");
    auto os = open_csv(path);
    os << "slot,demand_bits,ddqn_pct,sacd_pct,static_pct,phase\n";
    for (std::size_t i = 0; i < n; ++i) {
      auto pct = [&](const SchedulerRun& run) { return fmt_num(d == 0 ? run.rows[i].alloc_ul_pct : run.rows[i].alloc_dl_pct); };
      os << r.first + i << ',' << (d == 0 ? r.d_ul[i] : r.d_dl[i]) << ',' << pct(r.ddqn) << ',' << pct(r.sacd) << ',' << pct(r.stat) << ','
         << to_string(r.phases.phase[i]) << '\n';
    }
    close_csv(os, path);
  }
  const auto side = dir / "columns.txt";
  auto os = open_csv(side);
  os << "fig3_forecast.csv: stitched 10-slot forecasts conditioned on true history, first " << opt.forecast_slots << " slots\n"
     << "  slot           absolute slot index in the trace\n"
     << "  pred_ul_bits   predicted UL demand (bits/slot)\n"
     << "  pred_dl_bits   predicted DL demand (bits/slot)\n"
     << "  true_ul_bits   observed UL demand\n"
     << "  true_dl_bits   observed DL demand\n"
     << "fig4_ul_allocation.csv / fig5_dl_allocation.csv: first " << n << " slots\n"
     << "  slot           absolute slot index\n"
     << "  demand_bits    arrivals in that direction\n"
     << "  ddqn_pct       DDQN share of capacity (one of 0,10,20,30,40 UL; 60..100 DL)\n"
     << "  sacd_pct       SAC-D frame share (20.1/36.1/32.1 UL; 76.2/60.9/65.7 DL)\n"
     << "  static_pct     fixed split share\n"
     << "  phase          PEAK, IDLE, MID or OTHER\n";
  close_csv(os, side);
}

}  // namespace sbfd::eval
