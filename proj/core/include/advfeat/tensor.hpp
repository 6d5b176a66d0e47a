/*
 * Copyright 2026 The advfeat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "advfeat/errors.hpp"

namespace advfeat {

/// Semantic positions of the NCHW axes used by 4-D activation tensors.
enum class Axis : std::size_t { batch = 0, channel = 1, height = 2, width = 3 };

constexpr std::size_t axis_index(Axis a) noexcept { return static_cast<std::size_t>(a); }

/// Ordered list of dimension sizes. Non-empty, every dimension >= 1, and the
/// element count fits the addressable index space.
class Shape {
 public:
  Shape() : dims_{1} {}
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  std::size_t operator[](Axis axis) const { return dims_.at(axis_index(axis)); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t numel() const noexcept { return numel_; }

  /// Row-major strides, last axis contiguous.
  std::vector<std::size_t> strides() const;
  std::size_t flat_index(std::span<const std::size_t> coords) const;
  std::vector<std::size_t> unravel(std::size_t flat) const;

  std::string to_string() const;

  friend bool operator==(const Shape& a, const Shape& b) noexcept { return a.dims_ == b.dims_; }

 private:
  void validate();

  std::vector<std::size_t> dims_;
  std::size_t numel_ = 1;
};

/// Accumulator type for reductions: float data accumulates in double.
template <typename T>
using accum_t = std::conditional_t<std::is_same_v<T, float>, double, T>;

template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : data_(1, T{}) {}
  explicit BasicTensor(Shape shape) : shape_(std::move(shape)), data_(shape_.numel(), T{}) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_.to_string());
    }
  }

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }
  static BasicTensor full(Shape shape, T value) {
    BasicTensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.rank(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t flat) noexcept { return data_[flat]; }
  const T& operator[](std::size_t flat) const noexcept { return data_[flat]; }

  template <typename... I>
  T& at(I... idx) {
    return data_[offset(idx...)];
  }
  template <typename... I>
  const T& at(I... idx) const {
    return data_[offset(idx...)];
  }

  BasicTensor reshaped(Shape shape) const {
    if (shape.numel() != numel()) {
      throw ShapeError("cannot reshape " + shape_.to_string() + " to " + shape.to_string());
    }
    return BasicTensor(std::move(shape), data_);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool all_finite() const noexcept {
    for (const T& v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  void require_finite(std::string_view what) const {
    if (!all_finite()) throw NumericError("non-finite values in " + std::string(what));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  template <typename... I>
  std::size_t offset(I... idx) const {
    static_assert(sizeof...(I) > 0);
    const std::size_t coords[] = {static_cast<std::size_t>(idx)...};
    if (sizeof...(I) != shape_.rank()) {
      throw ShapeError("index rank " + std::to_string(sizeof...(I)) + " != tensor rank " +
                       std::to_string(shape_.rank()));
    }
    std::size_t flat = 0;
    for (std::size_t a = 0; a < sizeof...(I); ++a) flat = flat * shape_[a] + coords[a];
    return flat;
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

enum class BinaryOp { add, sub, mul };
enum class ReduceOp { sum, mean, max };

template <typename T>
BasicTensor<T> elementwise(const BasicTensor<T>& a, const BasicTensor<T>& b, BinaryOp op);

template <typename T>
BasicTensor<T> scaled(const BasicTensor<T>& a, T factor);

/// Reduces over `axes` (any order, no duplicates). Reduced axes are removed
/// from the result; reducing every axis yields shape [1]. Sums run left to
/// right over row-major element order with a 64-bit accumulator for float.
template <typename T>
BasicTensor<T> reduce(const BasicTensor<T>& a, std::span<const std::size_t> axes, ReduceOp op);

template <typename T>
BasicTensor<T> reduce(const BasicTensor<T>& a, std::initializer_list<std::size_t> axes, ReduceOp op) {
  return reduce(a, std::span<const std::size_t>(axes.begin(), axes.size()), op);
}

/// Concatenates equal-shaped tensors along a new leading axis.
template <typename T>
BasicTensor<T> stack(std::span<const BasicTensor<T>> items);

/// Copy of item `index` along the leading axis.
template <typename T>
BasicTensor<T> slice_leading(const BasicTensor<T>& a, std::size_t index);

// Serialization record: name (u32 length + UTF-8 bytes), rank (u32),
// dims (u32 each), data (little-endian float32, row-major).

struct TensorRecord {
  std::string name;
  Tensor tensor;
};

void write_tensor_record(std::ostream& out, std::string_view name, const Tensor& tensor);
TensorRecord read_tensor_record(std::istream& in);

namespace io {
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_string(std::ostream& out, std::string_view s);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
std::string read_string(std::istream& in);
}  // namespace io

}  // namespace advfeat
