#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "robosig/error.hpp"

namespace robosig {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream oss;
  oss << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) oss << ", ";
    oss << shape[i];
  }
  oss << ')';
  return oss.str();
}

// Dense row-major array. Rank-4 tensors use (batch, channels, height, width).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == shape_size(shape_),
            "tensor data size does not match shape " + shape_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h,
              std::size_t w) const noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  // Contiguous slab for item n along the leading axis.
  std::span<T> item(std::size_t n) {
    const std::size_t stride = size() / shape_[0];
    return {data_.data() + n * stride, stride};
  }
  std::span<const T> item(std::size_t n) const {
    const std::size_t stride = size() / shape_[0];
    return {data_.data() + n * stride, stride};
  }

  bool same_shape(const Tensor& other) const noexcept {
    return shape_ == other.shape_;
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  Tensor reshaped(Shape shape) const {
    require(shape_size(shape) == size(), "reshape changes element count");
    return Tensor(std::move(shape), data_);
  }

  Tensor& operator+=(const Tensor& other) {
    require(same_shape(other), "tensor += shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  Tensor& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Copies items [first, first + count) along the leading axis.
template <typename T>
Tensor<T> slice_items(const Tensor<T>& x, std::size_t first, std::size_t count) {
  require(first + count <= x.dim(0), "slice_items out of range");
  Shape shape = x.shape();
  shape[0] = count;
  const std::size_t stride = x.size() / x.dim(0);
  std::vector<T> out(x.data() + first * stride,
                     x.data() + (first + count) * stride);
  return Tensor<T>(std::move(shape), std::move(out));
}

// Gathers the given leading-axis indices into a new tensor.
template <typename T>
Tensor<T> gather_items(const Tensor<T>& x, std::span<const std::size_t> idx) {
  Shape shape = x.shape();
  shape[0] = idx.size();
  Tensor<T> out(shape);
  const std::size_t stride = x.size() / x.dim(0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] < x.dim(0), "gather_items index out of range");
    std::copy_n(x.data() + idx[i] * stride, stride, out.data() + i * stride);
  }
  return out;
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
  return std::all_of(x.values().begin(), x.values().end(),
                     [](T v) { return std::isfinite(v); });
}

}  // namespace robosig
