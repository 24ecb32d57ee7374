#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sbfd/error.hpp"
#include "sbfd/kv_config.hpp"

namespace sbfd::traffic {

enum Direction : std::size_t { kUl = 0, kDl = 1 };

// Hidden Markov chain whose state selects per-direction Poisson packet rates.
struct ModulatedChain {
  std::size_t n_states = 0;
  std::vector<double> transition;  // row-major n_states x n_states
  std::vector<double> rates_ul;    // packets/slot
  std::vector<double> rates_dl;
  std::uint64_t packet_bits = 1;
  std::vector<std::string> labels;
  std::string id;

  double p(std::size_t i, std::size_t j) const { return transition[i * n_states + j]; }

  // Long-run mean bits/slot given a stationary distribution.
  double mean_bits(const std::vector<double>& pi, Direction d) const {
    const auto& rates = d == kUl ? rates_ul : rates_dl;
    double s = 0.0;
    for (std::size_t i = 0; i < n_states; ++i) s += pi[i] * rates[i];
    return s * static_cast<double>(packet_bits);
  }
};

inline void validate(const ModulatedChain& c) {
  require(c.n_states > 0, ErrorKind::EmptyChain, "chain has no states");
  require(c.transition.size() == c.n_states * c.n_states, ErrorKind::NonStochasticMatrix,
          "transition matrix must be " + std::to_string(c.n_states) + "x" + std::to_string(c.n_states));
  require(c.rates_ul.size() == c.n_states && c.rates_dl.size() == c.n_states, ErrorKind::InvalidConfig,
          "need one UL and one DL rate per state");
  for (std::size_t i = 0; i < c.n_states; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < c.n_states; ++j) {
      const double v = c.p(i, j);
      require(v >= 0.0 && v <= 1.0, ErrorKind::NonStochasticMatrix,
              "transition." + std::to_string(i) + "." + std::to_string(j) + " outside [0,1]");
      row += v;
    }
    require(std::abs(row - 1.0) <= 1e-9, ErrorKind::NonStochasticMatrix,
            "row " + std::to_string(i) + " sums to " + std::to_string(row));
    require(c.rates_ul[i] >= 0.0 && c.rates_dl[i] >= 0.0 && std::isfinite(c.rates_ul[i]) && std::isfinite(c.rates_dl[i]),
            ErrorKind::NegativeRate, "state " + std::to_string(i) + " has a negative rate");
  }
  require(c.packet_bits >= 1, ErrorKind::InvalidConfig, "packet_bits must be >= 1");
}

inline ModulatedChain build_chain(ModulatedChain c) {
  validate(c);
  if (c.labels.size() != c.n_states) {
    c.labels.resize(c.n_states);
    for (std::size_t i = 0; i < c.n_states; ++i) {
      if (c.labels[i].empty()) c.labels[i] = "S" + std::to_string(i);
    }
  }
  return c;
}

// PEAK 30k/80k, IDLE 200/200, MID 12k/35k bits/slot; ~500-slot mean dwell.
inline ModulatedChain default_chain() {
  ModulatedChain c;
  c.n_states = 3;
  const double stay = 0.998, move = (1.0 - stay) / 2.0;
  c.transition = {stay, move, move, move, stay, move, move, move, stay};
  c.rates_ul = {30.0, 0.2, 12.0};
  c.rates_dl = {80.0, 0.2, 35.0};
  c.packet_bits = 1000;
  c.labels = {"PEAK", "IDLE", "MID"};
  c.id = "default-3state";
  return build_chain(std::move(c));
}

inline ModulatedChain chain_from_config(const KeyValues& kv) {
  ModulatedChain c;
  const long long n = kv.get_int("n_states");
  require(n > 0, ErrorKind::EmptyChain, "n_states must be positive");
  c.n_states = static_cast<std::size_t>(n);
  c.transition.assign(c.n_states * c.n_states, 0.0);
  c.rates_ul.assign(c.n_states, 0.0);
  c.rates_dl.assign(c.n_states, 0.0);
  c.labels.assign(c.n_states, "");
  for (std::size_t i = 0; i < c.n_states; ++i) {
    for (std::size_t j = 0; j < c.n_states; ++j) {
      c.transition[i * c.n_states + j] = kv.get_double("transition." + std::to_string(i) + "." + std::to_string(j));
    }
    c.rates_ul[i] = kv.get_double("rate_ul." + std::to_string(i));
    c.rates_dl[i] = kv.get_double("rate_dl." + std::to_string(i));
    kv.maybe("label." + std::to_string(i), c.labels[i]);
  }
  const long long bits = kv.get_int("packet_bits");
  require(bits >= 1, ErrorKind::InvalidConfig, "packet_bits must be >= 1");
  c.packet_bits = static_cast<std::uint64_t>(bits);
  c.id = "custom";
  kv.maybe("id", c.id);
  if (auto extra = kv.unused(); !extra.empty()) fail(ErrorKind::InvalidConfig, "unknown chain key '" + *extra.begin() + "'");
  return build_chain(std::move(c));
}

namespace detail {
inline bool irreducible(const ModulatedChain& c) {
  for (std::size_t s = 0; s < c.n_states; ++s) {
    std::vector<bool> seen(c.n_states, false);
    std::vector<std::size_t> stack{s};
    seen[s] = true;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < c.n_states; ++j) {
        if (c.p(i, j) > 0.0 && !seen[j]) {
          seen[j] = true;
          stack.push_back(j);
        }
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) return false;
  }
  return true;
}
}  // namespace detail

// Power iteration from a point mass on state 0. Reducible chains are rejected up front;
// periodic chains oscillate and hit the iteration cap.
inline std::vector<double> stationary_distribution(const ModulatedChain& c, double tol = 1e-15,
                                                   std::size_t max_iter = 10'000'000) {
  validate(c);
  if (!detail::irreducible(c)) fail(ErrorKind::NoConvergence, "chain is reducible; stationary distribution not unique");
  const std::size_t n = c.n_states;
  std::vector<double> pi(n, 0.0), next(n);
  pi[0] = 1.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) next[j] += pi[i] * c.p(i, j);
    }
    double sum = 0.0, diff = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += next[j];
    for (std::size_t j = 0; j < n; ++j) {
      next[j] /= sum;
      diff += std::abs(next[j] - pi[j]);
    }
    pi.swap(next);
    if (diff < tol) return pi;
  }
  fail(ErrorKind::NoConvergence, "power iteration did not converge in " + std::to_string(max_iter) + " steps");
}

struct SlotDemand {
  std::uint64_t ul = 0;
  std::uint64_t dl = 0;

  std::uint64_t operator[](Direction d) const { return d == kUl ? ul : dl; }
  friend bool operator==(const SlotDemand&, const SlotDemand&) = default;
};

struct TrafficTrace {
  std::vector<SlotDemand> slots;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> chain_id;
  // Hidden chain state per slot; empty for externally loaded traces without a sidecar.
  std::vector<std::uint8_t> states;
  std::vector<std::string> state_labels;

  std::size_t size() const { return slots.size(); }
  const SlotDemand& operator[](std::size_t i) const { return slots[i]; }
  bool has_states() const { return states.size() == slots.size() && !slots.empty(); }
};

// The chain starts in state 0 and takes one transition before every slot is sampled.
inline TrafficTrace generate_trace(const ModulatedChain& chain, std::size_t n_slots, std::uint64_t seed) {
  validate(chain);
  require(n_slots >= 1, ErrorKind::InvalidArgument, "n_slots must be >= 1");
  require(chain.n_states <= 256, ErrorKind::InvalidConfig, "at most 256 chain states are supported");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::poisson_distribution<std::uint64_t>> ul, dl;
  for (std::size_t i = 0; i < chain.n_states; ++i) {
    ul.emplace_back(chain.rates_ul[i] > 0.0 ? chain.rates_ul[i] : 1.0);
    dl.emplace_back(chain.rates_dl[i] > 0.0 ? chain.rates_dl[i] : 1.0);
  }
  TrafficTrace tr;
  tr.seed = seed;
  tr.chain_id = chain.id;
  tr.state_labels = chain.labels;
  tr.slots.resize(n_slots);
  tr.states.resize(n_slots);
  std::size_t state = 0;
  for (std::size_t t = 0; t < n_slots; ++t) {
    const double r = unif(rng);
    double acc = 0.0;
    std::size_t next = chain.n_states - 1;
    for (std::size_t j = 0; j < chain.n_states; ++j) {
      acc += chain.p(state, j);
      if (r < acc) {
        next = j;
        break;
      }
    }
    state = next;
    const std::uint64_t nu = chain.rates_ul[state] > 0.0 ? ul[state](rng) : 0;
    const std::uint64_t nd = chain.rates_dl[state] > 0.0 ? dl[state](rng) : 0;
    tr.slots[t] = {nu * chain.packet_bits, nd * chain.packet_bits};
    tr.states[t] = static_cast<std::uint8_t>(state);
  }
  return tr;
}

inline void write_trace_csv(const std::filesystem::path& path, const TrafficTrace& tr) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::IoFailure, "cannot write " + path.string());
  os << "slot,ul_bits,dl_bits\n";
  for (std::size_t t = 0; t < tr.size(); ++t) os << t << ',' << tr.slots[t].ul << ',' << tr.slots[t].dl << '\n';
  if (!os) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

// Hidden-state sidecar written next to generated traces: trace.csv -> trace.states.csv
inline std::filesystem::path states_sidecar(const std::filesystem::path& trace_csv) {
  auto p = trace_csv;
  p.replace_extension(".states.csv");
  return p;
}

inline void write_states_csv(const std::filesystem::path& path, const TrafficTrace& tr) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::IoFailure, "cannot write " + path.string());
  os << "slot,state,label\n";
  for (std::size_t t = 0; t < tr.states.size(); ++t) {
    const std::size_t s = tr.states[t];
    os << t << ',' << s << ',' << (s < tr.state_labels.size() ? tr.state_labels[s] : "S" + std::to_string(s)) << '\n';
  }
  if (!os) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

namespace detail {
inline std::uint64_t parse_u64(const std::string& s, const std::string& where) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    fail(ErrorKind::InvalidArgument, where + ": expected a non-negative integer, got '" + s + "'");
  }
  return std::stoull(s);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}
}  // namespace detail

// Reads `slot,ul_bits,dl_bits`; a hidden-state sidecar is picked up when present.
inline TrafficTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::IoFailure, "cannot read trace " + path.string());
  std::string line;
  if (!std::getline(is, line)) fail(ErrorKind::InvalidArgument, path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "slot,ul_bits,dl_bits") fail(ErrorKind::InvalidArgument, path.string() + ": unexpected header '" + line + "'");
  TrafficTrace tr;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(row);
    if (cells.size() != 3) fail(ErrorKind::InvalidArgument, where + ": expected 3 columns");
    const auto slot = detail::parse_u64(cells[0], where);
    if (slot != tr.slots.size()) fail(ErrorKind::InvalidArgument, where + ": slots must be consecutive from 0");
    tr.slots.push_back({detail::parse_u64(cells[1], where), detail::parse_u64(cells[2], where)});
  }
  if (tr.slots.empty()) fail(ErrorKind::InvalidArgument, path.string() + ": trace has no rows");

  const auto side = states_sidecar(path);
  if (std::filesystem::exists(side)) {
    std::ifstream ss(side);
    std::getline(ss, line);
    while (std::getline(ss, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto cells = detail::split_csv(line);
      if (cells.size() != 3) fail(ErrorKind::InvalidArgument, side.string() + ": expected slot,state,label");
      const auto s = detail::parse_u64(cells[1], side.string());
      require(s < 256, ErrorKind::InvalidArgument, side.string() + ": state index too large");
      if (tr.state_labels.size() <= s) tr.state_labels.resize(s + 1);
      tr.state_labels[s] = cells[2];
      tr.states.push_back(static_cast<std::uint8_t>(s));
    }
    if (tr.states.size() != tr.slots.size()) fail(ErrorKind::InvalidArgument, side.string() + ": row count differs from trace");
  }
  return tr;
}

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
};

// Min-max scaling per direction. Out-of-range values are not clamped.
struct Normalizer {
  double min_ul = 0.0, max_ul = 1.0, min_dl = 0.0, max_dl = 1.0;

  double lo(Direction d) const { return d == kUl ? min_ul : min_dl; }
  double span(Direction d) const { return d == kUl ? max_ul - min_ul : max_dl - min_dl; }
  double apply(double bits, Direction d) const { return (bits - lo(d)) / span(d); }
  double invert(double value, Direction d) const { return value * span(d) + lo(d); }
};

inline Normalizer fit_normalizer(const TrafficTrace& tr, IndexRange range) {
  require(!range.empty() && range.end <= tr.size(), ErrorKind::InvalidArgument, "normalizer fit range empty or out of bounds");
  Normalizer n;
  n.min_ul = n.min_dl = std::numeric_limits<double>::infinity();
  n.max_ul = n.max_dl = -std::numeric_limits<double>::infinity();
  for (std::size_t t = range.begin; t < range.end; ++t) {
    const auto ul = static_cast<double>(tr[t].ul), dl = static_cast<double>(tr[t].dl);
    n.min_ul = std::min(n.min_ul, ul);
    n.max_ul = std::max(n.max_ul, ul);
    n.min_dl = std::min(n.min_dl, dl);
    n.max_dl = std::max(n.max_dl, dl);
  }
  require(n.max_ul > n.min_ul, ErrorKind::DegenerateRange, "UL values are constant over the fit range");
  require(n.max_dl > n.min_dl, ErrorKind::DegenerateRange, "DL values are constant over the fit range");
  return n;
}

struct Partition {
  IndexRange train, val, test;
};

// 80/10/10 in time order over window indices.
inline Partition split_80_10_10(std::size_t n_windows) {
  const std::size_t n_train = n_windows * 8 / 10;
  const std::size_t n_val = n_windows / 10;
  return {{0, n_train}, {n_train, n_train + n_val}, {n_train + n_val, n_windows}};
}

inline std::size_t window_count(std::size_t n_slots, std::size_t lookback, std::size_t horizon) {
  return n_slots >= lookback + horizon ? n_slots - lookback - horizon + 1 : 0;
}

enum class FitScope { Train, All };

// Slots touched by training windows (inputs and targets), or the whole trace.
inline IndexRange normalizer_fit_range(std::size_t n_slots, std::size_t lookback, std::size_t horizon, FitScope scope) {
  const std::size_t w = window_count(n_slots, lookback, horizon);
  if (w == 0) fail(ErrorKind::TraceTooShort, "trace of " + std::to_string(n_slots) + " slots has no windows");
  if (scope == FitScope::All) return {0, n_slots};
  const auto part = split_80_10_10(w);
  if (part.train.empty()) return {0, n_slots};
  return {0, part.train.end - 1 + lookback + horizon};
}

// Window i has input slots [t-lookback, t-1] and target slots [t, t+horizon-1] with t = lookback + i.
struct WindowedDataset {
  std::size_t lookback = 30;
  std::size_t horizon = 10;
  std::size_t count = 0;
  std::vector<double> inputs;   // count x lookback x 2
  std::vector<double> targets;  // count x horizon x 2
  Partition partition;

  std::size_t first_target_slot(std::size_t i) const { return lookback + i; }
  const double* input(std::size_t i) const { return inputs.data() + i * lookback * 2; }
  const double* target(std::size_t i) const { return targets.data() + i * horizon * 2; }
};

inline WindowedDataset make_windows(const TrafficTrace& tr, const Normalizer& norm, std::size_t lookback = 30,
                                    std::size_t horizon = 10) {
  require(lookback >= 1 && horizon >= 1, ErrorKind::InvalidArgument, "lookback and horizon must be >= 1");
  const std::size_t w = window_count(tr.size(), lookback, horizon);
  if (w == 0) {
    fail(ErrorKind::TraceTooShort, "trace of " + std::to_string(tr.size()) + " slots is shorter than lookback + horizon = " +
                                       std::to_string(lookback + horizon));
  }
  std::vector<double> series(tr.size() * 2);
  for (std::size_t t = 0; t < tr.size(); ++t) {
    series[2 * t] = norm.apply(static_cast<double>(tr[t].ul), kUl);
    series[2 * t + 1] = norm.apply(static_cast<double>(tr[t].dl), kDl);
  }
  WindowedDataset ds;
  ds.lookback = lookback;
  ds.horizon = horizon;
  ds.count = w;
  ds.inputs.resize(w * lookback * 2);
  ds.targets.resize(w * horizon * 2);
  for (std::size_t i = 0; i < w; ++i) {
    const double* src = series.data() + 2 * i;
    std::copy(src, src + 2 * lookback, ds.inputs.begin() + static_cast<std::ptrdiff_t>(i * lookback * 2));
    std::copy(src + 2 * lookback, src + 2 * (lookback + horizon), ds.targets.begin() + static_cast<std::ptrdiff_t>(i * horizon * 2));
  }
  ds.partition = split_80_10_10(w);
  return ds;
}

}  // namespace sbfd::traffic
