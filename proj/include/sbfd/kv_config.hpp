#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "sbfd/error.hpp"

namespace sbfd {

// Flat key=value text: one pair per line, '#' starts a comment, surrounding whitespace ignored.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, const std::string& origin = "<string>") {
    KeyValues kv;
    std::size_t line_no = 0;
    while (!text.empty()) {
      const auto nl = text.find('\n');
      std::string_view line = text.substr(0, nl);
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        fail(ErrorKind::InvalidConfig, origin + ":" + std::to_string(line_no) + ": expected key=value");
      }
      const std::string key(trim(line.substr(0, eq)));
      if (key.empty()) fail(ErrorKind::InvalidConfig, origin + ":" + std::to_string(line_no) + ": empty key");
      kv.values_[key] = std::string(trim(line.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValues load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) fail(ErrorKind::IoFailure, "cannot read config " + path.string());
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse(text, path.string());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorKind::InvalidConfig, "missing key '" + key + "'");
    used_.insert(key);
    return it->second;
  }

  double get_double(const std::string& key) const { return to_double(key, get_string(key)); }

  long long get_int(const std::string& key) const {
    const std::string s = get_string(key);
    long long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) fail(ErrorKind::InvalidConfig, "key '" + key + "' is not an integer: " + s);
    return v;
  }

  template <typename T>
  void maybe(const std::string& key, T& out) const {
    if (!has(key)) return;
    if constexpr (std::is_same_v<T, std::string>) {
      out = get_string(key);
    } else if constexpr (std::is_same_v<T, bool>) {
      const std::string s = get_string(key);
      if (s == "1" || s == "true") out = true;
      else if (s == "0" || s == "false") out = false;
      else fail(ErrorKind::InvalidConfig, "key '" + key + "' is not a boolean: " + s);
    } else if constexpr (std::is_integral_v<T>) {
      const long long v = get_int(key);
      if (v < 0 && std::is_unsigned_v<T>) fail(ErrorKind::InvalidConfig, "key '" + key + "' must be non-negative");
      out = static_cast<T>(v);
    } else {
      out = static_cast<T>(get_double(key));
    }
  }

  // Keys never read through a getter; used to reject typos.
  std::set<std::string> unused() const {
    std::set<std::string> out;
    for (const auto& [k, v] : values_) {
      if (!used_.count(k)) out.insert(k);
    }
    return out;
  }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  }

  static double to_double(const std::string& key, const std::string& s) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::InvalidConfig, "key '" + key + "' is not a number: " + s);
    }
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace sbfd
