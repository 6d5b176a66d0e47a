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

#include <Eigen/Core>
#include <algorithm>
#include <vector>

#include "advfeat/nn.hpp"
#include "advfeat/parallel.hpp"

namespace advfeat {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kernel, padding, stride;
  std::size_t out_height, out_width;

  std::size_t patch() const { return channels * kernel * kernel; }
  std::size_t positions() const { return out_height * out_width; }
};

template <typename T>
ConvGeometry geometry(const BasicTensor<T>& x, const ConvLayer<T>& layer) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be [B,C,H,W], got " + x.shape().to_string());
  if (layer.kernels.rank() != 4 || layer.kernels.dim(2) != layer.kernels.dim(3)) {
    throw ShapeError("conv2d: kernels must be [O,C,k,k]");
  }
  if (layer.in_channels() != x.dim(1)) {
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(1)) + " channels, kernels expect " +
                     std::to_string(layer.in_channels()));
  }
  if (layer.bias.numel() != layer.out_channels()) throw ShapeError("conv2d: bias size mismatch");
  if (layer.stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t k = layer.kernel_size();
  return ConvGeometry{x.dim(1),
                      x.dim(2),
                      x.dim(3),
                      k,
                      layer.padding,
                      layer.stride,
                      conv_output_size(x.dim(2), k, layer.padding, layer.stride),
                      conv_output_size(x.dim(3), k, layer.padding, layer.stride)};
}

// Valid output column range [lo, hi) for kernel offset kx.
inline void valid_columns(const ConvGeometry& g, std::size_t kx, std::size_t& lo, std::size_t& hi) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto s = static_cast<std::ptrdiff_t>(g.stride);
  const auto off = static_cast<std::ptrdiff_t>(kx) - pad;
  std::ptrdiff_t first = off >= 0 ? 0 : (-off + s - 1) / s;
  std::ptrdiff_t last = (static_cast<std::ptrdiff_t>(g.width) - 1 - off);
  last = last < 0 ? -1 : last / s;
  lo = static_cast<std::size_t>(std::min<std::ptrdiff_t>(first, static_cast<std::ptrdiff_t>(g.out_width)));
  hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(last + 1, static_cast<std::ptrdiff_t>(lo),
                                                           static_cast<std::ptrdiff_t>(g.out_width)));
}

// Patch matrix [C*k*k, rows*Wo] for output rows [oy0, oy0+rows) of one sample.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, std::size_t oy0, std::size_t rows, T* col) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const std::size_t tile = rows * g.out_width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        std::size_t lo, hi;
        valid_columns(g, kx, lo, hi);
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - pad;
        T* row = col + ((c * g.kernel + ky) * g.kernel + kx) * tile;
        for (std::size_t r = 0; r < rows; ++r) {
          const auto iy = static_cast<std::ptrdiff_t>((oy0 + r) * g.stride + ky) - pad;
          T* dst = row + r * g.out_width;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_width, T(0));
            continue;
          }
          const T* src = x + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          std::fill(dst, dst + lo, T(0));
          if (g.stride == 1) {
            std::copy(src + static_cast<std::ptrdiff_t>(lo) + shift, src + static_cast<std::ptrdiff_t>(hi) + shift,
                      dst + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) {
              dst[ox] = src[static_cast<std::ptrdiff_t>(ox * g.stride) + shift];
            }
          }
          std::fill(dst + hi, dst + g.out_width, T(0));
        }
      }
    }
  }
}

// Accumulates a patch-gradient tile back into the input gradient.
template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, std::size_t oy0, std::size_t rows, T* x) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const std::size_t tile = rows * g.out_width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        std::size_t lo, hi;
        valid_columns(g, kx, lo, hi);
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - pad;
        const T* row = col + ((c * g.kernel + ky) * g.kernel + kx) * tile;
        for (std::size_t r = 0; r < rows; ++r) {
          const auto iy = static_cast<std::ptrdiff_t>((oy0 + r) * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = x + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          const T* src = row + r * g.out_width;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[static_cast<std::ptrdiff_t>(ox * g.stride) + shift] += src[ox];
        }
      }
    }
  }
}

// Output rows per tile: keeps the patch tile near 256 KiB.
std::size_t tile_rows(const ConvGeometry& g, std::size_t elem_size) {
  const std::size_t budget = (256u << 10) / elem_size;
  const std::size_t per_row = std::max<std::size_t>(1, g.patch() * g.out_width);
  return std::clamp<std::size_t>(budget / per_row, 1, g.out_height);
}

template <typename T>
std::vector<T>& scratch(std::size_t n) {
  thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

template <typename T>
std::vector<T>& scratch2(std::size_t n) {
  thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

}  // namespace

std::size_t conv_output_size(std::size_t extent, std::size_t kernel, std::size_t padding, std::size_t stride) {
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t padded = extent + 2 * padding;
  if (padded < kernel) throw ShapeError("conv2d: kernel larger than padded input");
  if ((padded - kernel) % stride != 0) throw ShapeError("conv2d: non-integral output size");
  return (padded - kernel) / stride + 1;
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const ConvLayer<T>& layer) {
  const ConvGeometry g = geometry(x, layer);
  const std::size_t batch = x.dim(0);
  const std::size_t out_ch = layer.out_channels();
  BasicTensor<T> out(Shape{batch, out_ch, g.out_height, g.out_width});

  const ConstMatrixMap<T> weights(layer.kernels.data().data(), static_cast<Eigen::Index>(out_ch),
                                  static_cast<Eigen::Index>(g.patch()));
  const std::size_t in_stride = g.channels * g.height * g.width;
  const std::size_t out_stride = out_ch * g.positions();
  const std::size_t rows = tile_rows(g, sizeof(T));
  parallel_for(batch, [&](std::size_t b) {
    auto& col = scratch<T>(g.patch() * rows * g.out_width);
    for (std::size_t oy = 0; oy < g.out_height; oy += rows) {
      const std::size_t n = std::min(rows, g.out_height - oy);
      const auto tile = static_cast<Eigen::Index>(n * g.out_width);
      im2col(x.data().data() + b * in_stride, g, oy, n, col.data());
      const ConstMatrixMap<T> patches(col.data(), static_cast<Eigen::Index>(g.patch()), tile);
      Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>> y(out.data().data() + b * out_stride + oy * g.out_width,
                                                          static_cast<Eigen::Index>(out_ch), tile,
                                                          Eigen::OuterStride<>(static_cast<Eigen::Index>(g.positions())));
      y.noalias() = weights * patches;
      for (std::size_t o = 0; o < out_ch; ++o) y.row(static_cast<Eigen::Index>(o)).array() += layer.bias[o];
    }
  });
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& grad_out, const BasicTensor<T>& input, const ConvLayer<T>& layer,
                             bool input_grad) {
  const ConvGeometry g = geometry(input, layer);
  const std::size_t batch = input.dim(0);
  const std::size_t out_ch = layer.out_channels();
  if (!(grad_out.shape() == Shape{batch, out_ch, g.out_height, g.out_width})) {
    throw ShapeError("conv2d_backward: grad_out shape " + grad_out.shape().to_string() + " does not match output");
  }

  ConvGrads<T> grads{input_grad ? BasicTensor<T>(input.shape()) : BasicTensor<T>(), BasicTensor<T>(layer.kernels.shape()),
                     BasicTensor<T>(layer.bias.shape())};
  const ConstMatrixMap<T> weights(layer.kernels.data().data(), static_cast<Eigen::Index>(out_ch),
                                  static_cast<Eigen::Index>(g.patch()));
  const std::size_t in_stride = g.channels * g.height * g.width;
  const std::size_t out_stride = out_ch * g.positions();
  const std::size_t w_size = layer.kernels.numel();

  // Per-sample kernel/bias gradients are reduced afterwards in sample order so
  // the result does not depend on the worker count.
  std::vector<T> sample_dw(batch * w_size);
  std::vector<accum_t<T>> sample_db(batch * out_ch);
  const std::size_t rows = tile_rows(g, sizeof(T));
  parallel_for(batch, [&](std::size_t b) {
    const std::size_t tile_max = rows * g.out_width;
    auto& col = scratch<T>(g.patch() * tile_max);
    auto& dcol = scratch2<T>(input_grad ? g.patch() * tile_max : 0);
    MatrixMap<T> dw(sample_dw.data() + b * w_size, static_cast<Eigen::Index>(out_ch),
                    static_cast<Eigen::Index>(g.patch()));
    dw.setZero();
    T* dx = input_grad ? grads.input.data().data() + b * in_stride : nullptr;
    for (std::size_t oy = 0; oy < g.out_height; oy += rows) {
      const std::size_t n = std::min(rows, g.out_height - oy);
      const auto tile = static_cast<Eigen::Index>(n * g.out_width);
      im2col(input.data().data() + b * in_stride, g, oy, n, col.data());
      const ConstMatrixMap<T> patches(col.data(), static_cast<Eigen::Index>(g.patch()), tile);
      Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>> dy(
          grad_out.data().data() + b * out_stride + oy * g.out_width, static_cast<Eigen::Index>(out_ch), tile,
          Eigen::OuterStride<>(static_cast<Eigen::Index>(g.positions())));
      dw.noalias() += dy * patches.transpose();
      if (!input_grad) continue;
      MatrixMap<T> dpatch(dcol.data(), static_cast<Eigen::Index>(g.patch()), tile);
      dpatch.noalias() = weights.transpose() * dy;
      col2im_add(dcol.data(), g, oy, n, dx);
    }
    for (std::size_t o = 0; o < out_ch; ++o) {
      accum_t<T> s{};
      const T* row = grad_out.data().data() + b * out_stride + o * g.positions();
      for (std::size_t p = 0; p < g.positions(); ++p) s += row[p];
      sample_db[b * out_ch + o] = s;
    }
  });

  std::vector<accum_t<T>> dw_acc(w_size);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* src = sample_dw.data() + b * w_size;
    for (std::size_t i = 0; i < w_size; ++i) dw_acc[i] += src[i];
  }
  auto dw = grads.kernels.data();
  for (std::size_t i = 0; i < w_size; ++i) dw[i] = static_cast<T>(dw_acc[i]);
  for (std::size_t o = 0; o < out_ch; ++o) {
    accum_t<T> s{};
    for (std::size_t b = 0; b < batch; ++b) s += sample_db[b * out_ch + o];
    grads.bias[o] = static_cast<T>(s);
  }
  return grads;
}

template BasicTensor<float> conv2d_forward(const BasicTensor<float>&, const ConvLayer<float>&);
template BasicTensor<double> conv2d_forward(const BasicTensor<double>&, const ConvLayer<double>&);
template ConvGrads<float> conv2d_backward(const BasicTensor<float>&, const BasicTensor<float>&,
                                          const ConvLayer<float>&, bool);
template ConvGrads<double> conv2d_backward(const BasicTensor<double>&, const BasicTensor<double>&,
                                           const ConvLayer<double>&, bool);

}  // namespace advfeat
