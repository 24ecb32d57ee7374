#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sbfd/nn/layers.hpp"

// Binary layout (all integers little-endian):
//   "SBFD" | u32 version | u32 count | count x { u32 name_len | name | u32 rank | rank x u64 dim | f32 values }

namespace sbfd::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'S', 'B', 'F', 'D'};

struct NamedTensor {
  std::string name;
  Tensor value;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) fail(ErrorKind::IoFailure, "truncated checkpoint " + path);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
  os.write(kCheckpointMagic, 4);
  detail::write_pod<std::uint32_t>(os, kCheckpointVersion);
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.value.rank()));
    for (auto d : t.value.shape()) detail::write_pod<std::uint64_t>(os, d);
    for (double v : t.value.values()) detail::write_pod<float>(os, static_cast<float>(v));
  }
  if (!os) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

inline std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::IoFailure, "cannot open checkpoint " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0) fail(ErrorKind::IoFailure, "bad checkpoint magic in " + path.string());
  const auto version = detail::read_pod<std::uint32_t>(is, path.string());
  if (version != kCheckpointVersion) {
    fail(ErrorKind::CheckpointVersionMismatch, path.string() + " has version " + std::to_string(version));
  }
  const auto count = detail::read_pod<std::uint32_t>(is, path.string());
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = detail::read_pod<std::uint32_t>(is, path.string());
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rank = detail::read_pod<std::uint32_t>(is, path.string());
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(is, path.string()));
    Tensor t(shape);
    for (auto& v : t.values()) v = static_cast<double>(detail::read_pod<float>(is, path.string()));
    out.push_back({std::move(name), std::move(t)});
  }
  return out;
}

inline std::vector<NamedTensor> snapshot(const std::vector<Parameter*>& params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const auto* p : params) out.push_back({p->name, p->value});
  return out;
}

// Copies tensors into parameters by name; every parameter must be present with a matching shape.
inline void restore(const std::vector<Parameter*>& params, const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t.value;
  for (auto* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) fail(ErrorKind::ShapeMismatch, "checkpoint lacks parameter '" + p->name + "'");
    if (it->second->shape() != p->value.shape()) {
      fail(ErrorKind::ShapeMismatch, "parameter '" + p->name + "' shape " + shape_str(p->value.shape()) + " vs checkpoint " +
                                         shape_str(it->second->shape()));
    }
    p->value = *it->second;
  }
}

inline const Tensor* find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

}  // namespace sbfd::nn
