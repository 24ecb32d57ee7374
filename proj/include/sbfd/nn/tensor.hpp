#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sbfd/error.hpp"

namespace sbfd::nn {

using Shape = std::vector<std::size_t>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
// Fixed alignment keeps Eigen's packet peeling, and so the summation order, independent of the heap.
using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense row-major f64 tensor. Data length always equals the product of the shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, const std::vector<double>& data) : Tensor(std::move(shape), Storage(data.begin(), data.end()), 0) {}

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* ptr() noexcept { return data_.data(); }
  const double* ptr() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  Storage& storage() noexcept { return data_; }
  const Storage& storage() const noexcept { return data_; }
  std::vector<double> to_vector() const { return {data_.begin(), data_.end()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape shape) const {
    require(shape_size(shape) == size(), ErrorKind::ShapeMismatch,
            "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), Storage(data_), 0);
  }

  // View as (rows, last-dim) matrix; leading dims are flattened.
  MatMap matrix() {
    const std::size_t cols = shape_.empty() ? 1 : shape_.back();
    return MatMap(data_.data(), static_cast<Eigen::Index>(cols ? size() / cols : 0), static_cast<Eigen::Index>(cols));
  }
  ConstMatMap matrix() const {
    const std::size_t cols = shape_.empty() ? 1 : shape_.back();
    return ConstMatMap(data_.data(), static_cast<Eigen::Index>(cols ? size() / cols : 0), static_cast<Eigen::Index>(cols));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Tensor(Shape shape, Storage data, int) : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == shape_size(shape_), ErrorKind::ShapeMismatch,
            "data length " + std::to_string(data_.size()) + " for shape " + shape_str(shape_));
  }

  Shape shape_;
  Storage data_;
};

inline void expect_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    fail(ErrorKind::ShapeMismatch, std::string(what) + ": got " + shape_str(t.shape()) + ", expected " + shape_str(expected));
  }
}

inline void expect_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    fail(ErrorKind::ShapeMismatch, std::string(what) + ": got " + shape_str(t.shape()) + ", expected rank " + std::to_string(rank));
  }
}

}  // namespace sbfd::nn
