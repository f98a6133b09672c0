// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rk {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

std::string shape_str(const Shape& shape);

/// Dense row-major array. `T` is float for training and double for
/// gradient verification.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  BasicTensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
      throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_str(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  /// Same data, new shape with equal element count.
  BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), data_); }

  /// Row `i` along the leading dimension, as a tensor of the trailing shape.
  BasicTensor slice(std::size_t i) const {
    Shape sub(shape_.begin() + 1, shape_.end());
    const std::size_t n = shape_numel(sub);
    return BasicTensor(std::move(sub),
                       std::vector<T>(data_.begin() + static_cast<std::ptrdiff_t>(i * n),
                                      data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
  }
  void set_slice(std::size_t i, const BasicTensor& item) {
    const std::size_t n = item.size();
    if (n * shape_[0] != data_.size())
      throw std::invalid_argument("set_slice: item shape " + shape_str(item.shape()) +
                                  " does not fit " + shape_str(shape_));
    std::copy(item.data_.begin(), item.data_.end(),
              data_.begin() + static_cast<std::ptrdiff_t>(i * n));
  }

  template <class U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Gather rows of `src` along the leading dimension.
template <class T>
BasicTensor<T> gather_rows(const BasicTensor<T>& src, std::span<const std::size_t> idx) {
  Shape shape = src.shape();
  const std::size_t row = src.size() / shape[0];
  shape[0] = idx.size();
  std::vector<T> out(idx.size() * row);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(src.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * row), row,
                out.begin() + static_cast<std::ptrdiff_t>(i * row));
  return BasicTensor<T>(std::move(shape), std::move(out));
}

}  // namespace rk
