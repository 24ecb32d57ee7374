#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

#include "sbfd/csv.hpp"
#include "sbfd/forecaster.hpp"
#include "sbfd/kv_config.hpp"
#include "sbfd/traffic.hpp"

namespace sbfd::env {

using traffic::kDl;
using traffic::kUl;

struct Split {
  int ul_pct = 20;
  int dl_pct = 80;

  double frac(traffic::Direction d) const { return (d == kUl ? ul_pct : dl_pct) / 100.0; }
  friend bool operator==(const Split&, const Split&) = default;
};

inline constexpr std::size_t kActions = 5;
inline constexpr std::size_t kHorizon = 10;
inline constexpr std::size_t kStateDim = 2 * kHorizon + 2;

inline const std::array<Split, kActions>& action_table() {
  static const std::array<Split, kActions> table{{{40, 60}, {30, 70}, {20, 80}, {10, 90}, {0, 100}}};
  return table;
}

inline Split parse_split(const std::string& s) {
  const auto colon = s.find(':');
  int ul = -1, dl = -1;
  try {
    if (colon == std::string::npos) throw std::invalid_argument(s);
    std::size_t p1 = 0, p2 = 0;
    ul = std::stoi(s.substr(0, colon), &p1);
    dl = std::stoi(s.substr(colon + 1), &p2);
    if (p1 != colon || p2 != s.size() - colon - 1) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    fail(ErrorKind::InvalidArgument, "split must look like UL:DL, got '" + s + "'");
  }
  require(ul >= 0 && dl >= 0 && ul + dl == 100, ErrorKind::InvalidArgument, "split percentages must be >= 0 and sum to 100: " + s);
  return {ul, dl};
}

using StateVec = std::array<double, kStateDim>;

struct EnvState {
  StateVec v{};

  double q_ul_norm() const { return v[2 * kHorizon]; }
  double q_dl_norm() const { return v[2 * kHorizon + 1]; }
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

// forecast is horizon x 2 interleaved (UL, DL per slot); the state lists all UL values first.
inline EnvState build_state(std::span<const double> forecast, double q_ul, double q_dl, double capacity) {
  require(forecast.size() == 2 * kHorizon, ErrorKind::ShapeMismatch, "forecast window must hold 20 values");
  require(q_ul >= 0.0 && q_dl >= 0.0, ErrorKind::NegativeQueue, "queue lengths must be non-negative");
  EnvState s;
  for (std::size_t k = 0; k < kHorizon; ++k) {
    s.v[k] = forecast[2 * k];
    s.v[kHorizon + k] = forecast[2 * k + 1];
  }
  s.v[2 * kHorizon] = q_ul / (10.0 * capacity);
  s.v[2 * kHorizon + 1] = q_dl / (10.0 * capacity);
  return s;
}

struct EnvConfig {
  double capacity = 100'000.0;
  double w_waste_ul = 0.10;
  double w_waste_dl = 0.20;
  double p_burst = 0.20;
  double p_switch = 0.05;
  double burst_theta = 1.0;
  std::size_t episode_len = 1000;

  void validate() const {
    require(capacity > 0.0, ErrorKind::InvalidConfig, "capacity must be > 0");
    require(w_waste_ul >= 0.0 && w_waste_dl >= 0.0 && p_burst >= 0.0 && p_switch >= 0.0, ErrorKind::InvalidConfig,
            "penalty weights must be >= 0");
    require(burst_theta > 0.0, ErrorKind::InvalidConfig, "burst_theta must be > 0");
    require(episode_len >= 1, ErrorKind::InvalidConfig, "episode_len must be >= 1");
  }

  static EnvConfig from(const KeyValues& kv) {
    EnvConfig c;
    kv.maybe("capacity", c.capacity);
    kv.maybe("w_waste_ul", c.w_waste_ul);
    kv.maybe("w_waste_dl", c.w_waste_dl);
    kv.maybe("p_burst", c.p_burst);
    kv.maybe("p_switch", c.p_switch);
    kv.maybe("burst_theta", c.burst_theta);
    kv.maybe("episode_len", c.episode_len);
    c.validate();
    return c;
  }
};

// Supplies the 10x2 normalized forecast used as the first 20 state entries at a cursor slot.
class ForecastSource {
 public:
  virtual ~ForecastSource() = default;
  virtual void window(std::size_t slot, std::span<double> out) const = 0;
  virtual bool covers(std::size_t slot) const = 0;
};

class TableSource : public ForecastSource {
 public:
  explicit TableSource(const forecast::ForecastTable& table) : table_(table) {}
  void window(std::size_t slot, std::span<double> out) const override {
    const auto w = table_.at(slot);
    std::copy(w.begin(), w.end(), out.begin());
  }
  bool covers(std::size_t slot) const override { return slot >= table_.first() && slot <= table_.last(); }

 private:
  const forecast::ForecastTable& table_;
};

// True future demand, normalized; for ablations. Slots past the trace end read as zero traffic.
class OracleSource : public ForecastSource {
 public:
  OracleSource(const traffic::TrafficTrace& tr, traffic::Normalizer norm) : tr_(tr), norm_(norm) {}
  void window(std::size_t slot, std::span<double> out) const override {
    for (std::size_t k = 0; k < kHorizon; ++k) {
      const bool in = slot + k < tr_.size();
      out[2 * k] = norm_.apply(in ? static_cast<double>(tr_[slot + k].ul) : 0.0, kUl);
      out[2 * k + 1] = norm_.apply(in ? static_cast<double>(tr_[slot + k].dl) : 0.0, kDl);
    }
  }
  bool covers(std::size_t slot) const override { return slot <= tr_.size(); }

 private:
  const traffic::TrafficTrace& tr_;
  traffic::Normalizer norm_;
};

class ZeroSource : public ForecastSource {
 public:
  void window(std::size_t, std::span<double> out) const override { std::fill(out.begin(), out.end(), 0.0); }
  bool covers(std::size_t) const override { return true; }
};

struct Penalties {
  double waste = 0.0;
  double burst = 0.0;
  double switching = 0.0;
  double total() const { return waste + burst + switching; }
};

struct StepOutcome {
  std::size_t slot = 0;
  Split split;
  std::uint64_t arr_ul = 0, arr_dl = 0;
  std::uint64_t q_ul = 0, q_dl = 0;  // after arrivals, before service
  std::uint64_t cap_ul = 0, cap_dl = 0;
  std::uint64_t served_ul = 0, served_dl = 0;
  std::uint64_t next_q_ul = 0, next_q_dl = 0;
  double sat_ul = 1.0, sat_dl = 1.0;
  double reward = 0.0;
  Penalties pen;
  EnvState next_state;
  bool terminal = false;
};

// Single-slot dynamics shared by every queued scheduler.
struct SlotResult {
  std::uint64_t cap_ul, cap_dl, served_ul, served_dl;
  double sat_ul, sat_dl, reward;
  Penalties pen;
};

inline SlotResult serve_slot(const EnvConfig& cfg, std::uint64_t q_ul, std::uint64_t q_dl, Split split,
                             std::optional<Split> previous) {
  SlotResult r{};
  const double C = cfg.capacity;
  r.cap_ul = static_cast<std::uint64_t>(std::floor(C * split.ul_pct / 100.0));
  r.cap_dl = static_cast<std::uint64_t>(std::floor(C * split.dl_pct / 100.0));
  r.served_ul = std::min(q_ul, r.cap_ul);
  r.served_dl = std::min(q_dl, r.cap_dl);
  r.sat_ul = q_ul == 0 ? 1.0 : static_cast<double>(r.served_ul) / static_cast<double>(q_ul);
  r.sat_dl = q_dl == 0 ? 1.0 : static_cast<double>(r.served_dl) / static_cast<double>(q_dl);

  const double dem_ul = std::min(static_cast<double>(q_ul) / C, 1.0);
  const double dem_dl = std::min(static_cast<double>(q_dl) / C, 1.0);
  r.pen.waste = cfg.w_waste_ul * std::max(0.0, split.frac(kUl) - dem_ul) + cfg.w_waste_dl * std::max(0.0, split.frac(kDl) - dem_dl);
  const double theta = cfg.burst_theta * C;
  if (static_cast<double>(q_ul) > theta && r.cap_ul < q_ul) r.pen.burst += cfg.p_burst;
  if (static_cast<double>(q_dl) > theta && r.cap_dl < q_dl) r.pen.burst += cfg.p_burst;
  if (previous && !(*previous == split)) r.pen.switching = cfg.p_switch;
  r.reward = std::clamp(std::sqrt(r.sat_ul * r.sat_dl) - r.pen.total(), -1.0, 1.0);
  return r;
}

class SbfdEnv {
 public:
  SbfdEnv(const traffic::TrafficTrace& trace, const ForecastSource& source, EnvConfig cfg = {})
      : tr_(trace), src_(source), cfg_(cfg) {
    cfg_.validate();
  }

  const EnvConfig& config() const { return cfg_; }
  std::size_t cursor() const { return cursor_; }
  std::uint64_t q_ul() const { return q_ul_; }
  std::uint64_t q_dl() const { return q_dl_; }
  bool done() const { return done_; }

  // First valid episode start and last valid start for this trace.
  static constexpr std::size_t kMinStart = 30;
  std::size_t max_start(std::size_t len) const { return tr_.size() >= len ? tr_.size() - len : 0; }

  EnvState reset(std::size_t start, std::optional<std::size_t> length = std::nullopt) {
    const std::size_t len = length.value_or(cfg_.episode_len);
    require(len >= 1, ErrorKind::InvalidArgument, "episode length must be >= 1");
    require(start >= kMinStart && start + len <= tr_.size() && src_.covers(start), ErrorKind::InsufficientHistory,
            "trace does not cover [" + std::to_string(start) + "-30, " + std::to_string(start) + "+" + std::to_string(len) +
                "] with " + std::to_string(tr_.size()) + " slots");
    start_ = cursor_ = start;
    end_ = start + len;
    q_ul_ = q_dl_ = 0;
    prev_.reset();
    done_ = false;
    return state();
  }

  EnvState state() const {
    std::array<double, 2 * kHorizon> w{};
    if (src_.covers(cursor_)) src_.window(cursor_, w);
    return build_state(w, static_cast<double>(q_ul_), static_cast<double>(q_dl_), cfg_.capacity);
  }

  StepOutcome step(std::size_t action) {
    require(action < kActions, ErrorKind::InvalidArgument, "action index " + std::to_string(action) + " out of range");
    return step_split(action_table()[action]);
  }

  StepOutcome step_split(Split split) {
    require(!done_ && end_ > 0, ErrorKind::EpisodeFinished, "episode finished; call reset()");
    StepOutcome o;
    o.slot = cursor_;
    o.split = split;
    o.arr_ul = tr_[cursor_].ul;
    o.arr_dl = tr_[cursor_].dl;
    q_ul_ += o.arr_ul;
    q_dl_ += o.arr_dl;
    o.q_ul = q_ul_;
    o.q_dl = q_dl_;
    const SlotResult r = serve_slot(cfg_, q_ul_, q_dl_, split, prev_);
    o.cap_ul = r.cap_ul;
    o.cap_dl = r.cap_dl;
    o.served_ul = r.served_ul;
    o.served_dl = r.served_dl;
    o.sat_ul = r.sat_ul;
    o.sat_dl = r.sat_dl;
    o.pen = r.pen;
    o.reward = r.reward;
    q_ul_ -= r.served_ul;
    q_dl_ -= r.served_dl;
    o.next_q_ul = q_ul_;
    o.next_q_dl = q_dl_;
    prev_ = split;
    ++cursor_;
    done_ = cursor_ >= end_;
    o.terminal = done_;
    o.next_state = state();
    return o;
  }

 private:
  const traffic::TrafficTrace& tr_;
  const ForecastSource& src_;
  EnvConfig cfg_;
  std::size_t start_ = 0, cursor_ = 0, end_ = 0;
  std::uint64_t q_ul_ = 0, q_dl_ = 0;
  std::optional<Split> prev_;
  bool done_ = true;
};

inline void write_step_header(std::ostream& os) {
  os << "slot,action_ul_pct,arr_ul,arr_dl,q_ul,q_dl,served_ul,served_dl,sat_ul,sat_dl,reward,pen_waste,pen_burst,pen_switch\n";
}

// q_ul/q_dl are the queues carried into the next slot.
inline void write_step_row(std::ostream& os, const StepOutcome& o) {
  os << o.slot << ',' << o.split.ul_pct << ',' << o.arr_ul << ',' << o.arr_dl << ',' << o.next_q_ul << ',' << o.next_q_dl << ','
     << o.served_ul << ',' << o.served_dl << ',' << fmt_num(o.sat_ul) << ',' << fmt_num(o.sat_dl) << ',' << fmt_num(o.reward) << ','
     << fmt_num(o.pen.waste) << ',' << fmt_num(o.pen.burst) << ',' << fmt_num(o.pen.switching) << '\n';
}

inline void write_step_log(const std::filesystem::path& path, const std::vector<StepOutcome>& log) {
  auto os = open_csv(path);
  write_step_header(os);
  for (const auto& o : log) write_step_row(os, o);
  close_csv(os, path);
}

}  // namespace sbfd::env
