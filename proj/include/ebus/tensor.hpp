// Copyright 2026 The ebus-slowfast Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ebus/error.hpp"

namespace ebus {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& dims);
std::size_t shape_numel(const Shape& dims);

/// Dense row-major array. Value type; copies are deep.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape dims, T fill = T{0}) : dims_(std::move(dims)) {
    validate_dims();
    data_.assign(shape_numel(dims_), fill);
  }

  Tensor(Shape dims, std::vector<T> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    validate_dims();
    if (data_.size() != shape_numel(dims_)) {
      throw ShapeError("numel", "tensor data length " +
                                    std::to_string(data_.size()) +
                                    " does not match dims " + shape_str(dims_));
    }
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.dims_); }

  const Shape& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::int64_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return dims_.empty() && data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Row-major multi-index access; bounds checked.
  T& at(std::initializer_list<std::int64_t> idx) { return data_[offset(idx)]; }
  const T& at(std::initializer_list<std::int64_t> idx) const {
    return data_[offset(idx)];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape dims) const {
    if (shape_numel(dims) != numel()) {
      throw ShapeError("numel", "cannot reshape " + shape_str(dims_) + " to " +
                                    shape_str(dims));
    }
    return Tensor(std::move(dims), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return Tensor<U>(dims_, std::move(out));
  }

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

  bool operator==(const Tensor& other) const = default;

 private:
  void validate_dims() const {
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (dims_[i] <= 0) {
        throw ShapeError(std::to_string(i),
                         "tensor dims must be positive, got " + shape_str(dims_));
      }
    }
  }

  std::size_t offset(std::initializer_list<std::int64_t> idx) const {
    if (idx.size() != dims_.size()) {
      throw ShapeError("rank", "index rank " + std::to_string(idx.size()) +
                                   " vs tensor rank " +
                                   std::to_string(dims_.size()));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : idx) {
      if (i < 0 || i >= dims_[axis]) {
        throw ShapeError(std::to_string(axis), "index out of range");
      }
      off = off * static_cast<std::size_t>(dims_[axis]) +
            static_cast<std::size_t>(i);
      ++axis;
    }
    return off;
  }

  Shape dims_;
  std::vector<T> data_;
};

}  // namespace ebus
