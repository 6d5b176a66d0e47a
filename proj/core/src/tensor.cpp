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

#include "advfeat/tensor.hpp"

#include <algorithm>
#include <bit>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace advfeat {

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate(); }

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate(); }

void Shape::validate() {
  if (dims_.empty()) throw ShapeError("shape must have at least one dimension");
  // Cap at what a std::vector<double> can address so any tensor type fits.
  const std::size_t limit = std::numeric_limits<std::ptrdiff_t>::max() / sizeof(double);
  std::size_t n = 1;
  for (std::size_t d : dims_) {
    if (d == 0) throw ShapeError("shape " + to_string() + " has a zero dimension");
    if (n > limit / d) throw ShapeError("shape " + to_string() + " overflows the addressable index space");
    n *= d;
  }
  numel_ = n;
}

std::vector<std::size_t> Shape::strides() const {
  std::vector<std::size_t> s(dims_.size(), 1);
  for (std::size_t a = dims_.size(); a-- > 1;) s[a - 1] = s[a] * dims_[a];
  return s;
}

std::size_t Shape::flat_index(std::span<const std::size_t> coords) const {
  if (coords.size() != dims_.size()) throw ShapeError("coordinate rank mismatch for shape " + to_string());
  std::size_t flat = 0;
  for (std::size_t a = 0; a < coords.size(); ++a) {
    if (coords[a] >= dims_[a]) throw ShapeError("coordinate out of range for shape " + to_string());
    flat = flat * dims_[a] + coords[a];
  }
  return flat;
}

std::vector<std::size_t> Shape::unravel(std::size_t flat) const {
  if (flat >= numel_) throw ShapeError("flat index out of range for shape " + to_string());
  std::vector<std::size_t> coords(dims_.size());
  for (std::size_t a = dims_.size(); a-- > 0;) {
    coords[a] = flat % dims_[a];
    flat /= dims_[a];
  }
  return coords;
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t a = 0; a < dims_.size(); ++a) os << (a ? "," : "") << dims_[a];
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T> elementwise(const BasicTensor<T>& a, const BasicTensor<T>& b, BinaryOp op) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError("elementwise shape mismatch: " + a.shape().to_string() + " vs " + b.shape().to_string());
  }
  BasicTensor<T> out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto z = out.data();
  switch (op) {
    case BinaryOp::add:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i];
      break;
    case BinaryOp::sub:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] - y[i];
      break;
    case BinaryOp::mul:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * y[i];
      break;
  }
  out.require_finite("elementwise result");
  return out;
}

template <typename T>
BasicTensor<T> scaled(const BasicTensor<T>& a, T factor) {
  BasicTensor<T> out(a.shape());
  auto x = a.data();
  auto z = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * factor;
  out.require_finite("scaled result");
  return out;
}

template <typename T>
BasicTensor<T> reduce(const BasicTensor<T>& a, std::span<const std::size_t> axes, ReduceOp op) {
  if (axes.empty()) throw ShapeError("reduce: empty axis list");
  const std::size_t rank = a.rank();
  std::vector<bool> reduced(rank, false);
  for (std::size_t ax : axes) {
    if (ax >= rank) throw ShapeError("reduce: axis " + std::to_string(ax) + " out of range for " + a.shape().to_string());
    if (reduced[ax]) throw ShapeError("reduce: duplicate axis " + std::to_string(ax));
    reduced[ax] = true;
  }

  std::vector<std::size_t> out_dims;
  for (std::size_t ax = 0; ax < rank; ++ax) {
    if (!reduced[ax]) out_dims.push_back(a.dim(ax));
  }
  if (out_dims.empty()) out_dims.push_back(1);
  const Shape out_shape(out_dims);

  // Map every input element to its output slot, visiting inputs in row-major
  // order so each accumulator sees its elements left to right.
  const std::size_t n_out = out_shape.numel();
  std::vector<accum_t<T>> acc(n_out, accum_t<T>{});
  std::vector<bool> seen(n_out, false);
  std::vector<T> best(op == ReduceOp::max ? n_out : 0);
  std::vector<std::size_t> coord(rank, 0);
  const auto src = a.data();
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    std::size_t o = 0;
    for (std::size_t ax = 0; ax < rank; ++ax) {
      if (!reduced[ax]) o = o * a.dim(ax) + coord[ax];
    }
    if (op == ReduceOp::max) {
      if (!seen[o] || src[flat] > best[o]) best[o] = src[flat];
      seen[o] = true;
    } else {
      acc[o] += static_cast<accum_t<T>>(src[flat]);
    }
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++coord[ax] < a.dim(ax)) break;
      coord[ax] = 0;
    }
  }

  BasicTensor<T> out(out_shape);
  const std::size_t count = a.numel() / n_out;
  for (std::size_t o = 0; o < n_out; ++o) {
    switch (op) {
      case ReduceOp::sum:
        out[o] = static_cast<T>(acc[o]);
        break;
      case ReduceOp::mean:
        out[o] = static_cast<T>(acc[o] / static_cast<accum_t<T>>(count));
        break;
      case ReduceOp::max:
        out[o] = best[o];
        break;
    }
  }
  out.require_finite("reduction result");
  return out;
}

template <typename T>
BasicTensor<T> stack(std::span<const BasicTensor<T>> items) {
  if (items.empty()) throw ShapeError("stack: no tensors");
  const Shape& inner = items.front().shape();
  std::vector<std::size_t> dims{items.size()};
  dims.insert(dims.end(), inner.dims().begin(), inner.dims().end());
  BasicTensor<T> out{Shape(dims)};
  auto dst = out.data();
  const std::size_t n = inner.numel();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!(items[i].shape() == inner)) throw ShapeError("stack: inconsistent shapes");
    std::copy(items[i].data().begin(), items[i].data().end(), dst.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return out;
}

template <typename T>
BasicTensor<T> slice_leading(const BasicTensor<T>& a, std::size_t index) {
  if (a.rank() < 2) throw ShapeError("slice_leading: needs rank >= 2");
  if (index >= a.dim(0)) throw ShapeError("slice_leading: index out of range");
  std::vector<std::size_t> dims(a.shape().dims().begin() + 1, a.shape().dims().end());
  const Shape inner(dims);
  const std::size_t n = inner.numel();
  auto src = a.data().subspan(index * n, n);
  return BasicTensor<T>(inner, std::vector<T>(src.begin(), src.end()));
}

#define ADVFEAT_INSTANTIATE_TENSOR_OPS(T)                                                        \
  template BasicTensor<T> elementwise(const BasicTensor<T>&, const BasicTensor<T>&, BinaryOp);   \
  template BasicTensor<T> scaled(const BasicTensor<T>&, T);                                      \
  template BasicTensor<T> reduce(const BasicTensor<T>&, std::span<const std::size_t>, ReduceOp); \
  template BasicTensor<T> stack(std::span<const BasicTensor<T>>);                                \
  template BasicTensor<T> slice_leading(const BasicTensor<T>&, std::size_t);

ADVFEAT_INSTANTIATE_TENSOR_OPS(float)
ADVFEAT_INSTANTIATE_TENSOR_OPS(double)
#undef ADVFEAT_INSTANTIATE_TENSOR_OPS

namespace io {

namespace {

template <typename U>
void write_le(std::ostream& out, U v) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U read_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw FormatError("truncated binary stream");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
void write_f32(std::ostream& out, float v) { write_le(out, std::bit_cast<std::uint32_t>(v)); }

void write_string(std::ostream& out, std::string_view s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return read_le<std::uint64_t>(in); }
float read_f32(std::istream& in) { return std::bit_cast<float>(read_le<std::uint32_t>(in)); }

std::string read_string(std::istream& in) {
  const std::uint32_t n = read_u32(in);
  if (n > (1u << 20)) throw FormatError("implausible string length in binary stream");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw FormatError("truncated string in binary stream");
  return s;
}

}  // namespace io

void write_tensor_record(std::ostream& out, std::string_view name, const Tensor& tensor) {
  io::write_string(out, name);
  io::write_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape().dims()) io::write_u32(out, static_cast<std::uint32_t>(d));
  for (float v : tensor.data()) io::write_f32(out, v);
}

TensorRecord read_tensor_record(std::istream& in) {
  TensorRecord rec;
  rec.name = io::read_string(in);
  const std::uint32_t rank = io::read_u32(in);
  if (rank == 0 || rank > 8) throw FormatError("tensor record '" + rec.name + "' has invalid rank");
  std::vector<std::size_t> dims(rank);
  for (auto& d : dims) d = io::read_u32(in);
  Shape shape;
  try {
    shape = Shape(dims);
  } catch (const ShapeError& e) {
    throw FormatError("tensor record '" + rec.name + "': " + e.what());
  }
  std::vector<float> data(shape.numel());
  for (auto& v : data) v = io::read_f32(in);
  rec.tensor = Tensor(shape, std::move(data));
  return rec;
}

}  // namespace advfeat
