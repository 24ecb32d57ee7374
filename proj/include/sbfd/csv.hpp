#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "sbfd/error.hpp"

namespace sbfd {

// Shortest round-trippable-enough fixed formatting used by every CSV writer, so reruns are byte-identical.
inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::ofstream open_csv(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::IoFailure, "cannot write " + path.string());
  return os;
}

inline void close_csv(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

// FNV-1a, used to fingerprint demand streams.
class Fnv1a {
 public:
  void add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h_ ^= (v >> (8 * i)) & 0xffu;
      h_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace sbfd
