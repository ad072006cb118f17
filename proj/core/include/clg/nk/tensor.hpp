#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "clg/errors.hpp"

namespace clg::nk {

// Dense row-major matrix. Every value in the numerical core is a matrix:
// vectors are 1xn rows and scalars are 1x1.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, T fill = T(0)) : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    check_extents();
  }
  Tensor(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    check_extents();
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                           shape_string());
    }
  }
  // Nested initializer: Tensor<double>{{1, 2}, {3, 4}}.
  Tensor(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("ragged tensor initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
    check_extents();
  }

  static Tensor scalar(T v) { return Tensor(1, 1, v); }
  static Tensor row(std::span<const T> v) { return Tensor(1, v.size(), std::vector<T>(v.begin(), v.end())); }
  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = T(1);
    return t;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  std::string shape_string() const { return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]"; }
  bool same_shape(const Tensor& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T item() const {
    if (data_.size() != 1) throw ContractError("item() on non-scalar tensor " + shape_string());
    return data_[0];
  }

  std::span<T> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row_span(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(rows_, cols_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor& o) const = default;

 private:
  void check_extents() const {
    if (rows_ == 0 || cols_ == 0) throw DimensionError("tensor extents must be positive, got " + shape_string());
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

}  // namespace clg::nk
