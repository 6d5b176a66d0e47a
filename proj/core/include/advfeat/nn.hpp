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

#include <cstddef>
#include <cstdint>
#include <vector>

#include "advfeat/tensor.hpp"

namespace advfeat {

// Layers with explicit forward and backward passes over NCHW tensors. Every
// kernel is instantiated for float (training) and double (gradient checks).

template <typename T>
struct ConvLayer {
  BasicTensor<T> kernels;  // [out, in, k, k]
  BasicTensor<T> bias;     // [out]
  std::size_t padding = 1;
  std::size_t stride = 1;

  static ConvLayer make(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                        std::size_t padding) {
    return ConvLayer{BasicTensor<T>(Shape{out_channels, in_channels, kernel, kernel}),
                     BasicTensor<T>(Shape{out_channels}), padding, 1};
  }

  std::size_t out_channels() const { return kernels.dim(0); }
  std::size_t in_channels() const { return kernels.dim(1); }
  std::size_t kernel_size() const { return kernels.dim(2); }
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> kernels;
  BasicTensor<T> bias;
};

/// (extent + 2*padding - kernel) / stride + 1; throws ShapeError when the
/// division is not exact or the kernel does not fit.
std::size_t conv_output_size(std::size_t extent, std::size_t kernel, std::size_t padding, std::size_t stride);

/// Direct cross-correlation (no kernel flip) with zero padding.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const ConvLayer<T>& layer);

/// With input_grad false the input gradient is skipped and left as a
/// default (shape [1]) tensor.
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& grad_out, const BasicTensor<T>& input, const ConvLayer<T>& layer,
                             bool input_grad = true);

/// Argmax bookkeeping for 2x2/stride-2 max pooling. `argmax[o]` is the flat
/// input index that won output element `o`.
struct PoolIndices {
  Shape input_shape;
  std::vector<std::uint32_t> argmax;
};

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  PoolIndices indices;
};

/// Ties go to the first maximal element in row-major window order.
template <typename T>
PoolResult<T> maxpool2x2(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> maxpool2x2_backward(const BasicTensor<T>& grad_out, const PoolIndices& indices);

inline constexpr double kLeakySlope = 0.2;

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope = T(kLeakySlope));

/// Derivative at exactly 0 takes the positive branch (1).
template <typename T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& grad_out, const BasicTensor<T>& input,
                                   T slope = T(kLeakySlope));

enum class Mode { train, eval };

template <typename T>
struct BatchNormLayer {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  static BatchNormLayer make(std::size_t channels) {
    return BatchNormLayer{BasicTensor<T>::full(Shape{channels}, T(1)), BasicTensor<T>(Shape{channels}),
                          BasicTensor<T>(Shape{channels}), BasicTensor<T>::full(Shape{channels}, T(1))};
  }
  std::size_t channels() const { return gamma.numel(); }
};

/// Saved state for the backward pass.
template <typename T>
struct BatchNormCache {
  Mode mode = Mode::train;
  BasicTensor<T> normalized;     // x_hat, same shape as the input
  std::vector<double> inv_std;   // per channel
};

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> input;
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
};

/// Train mode normalizes each channel with the biased batch variance over
/// (batch, height, width) and folds the unbiased variance into the running
/// statistics. Eval mode uses the running statistics and leaves them alone.
template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, BatchNormLayer<T>& layer, Mode mode,
                                 BatchNormCache<T>* cache = nullptr);

template <typename T>
BasicTensor<T> batchnorm_eval(const BasicTensor<T>& x, const BatchNormLayer<T>& layer);

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& grad_out, const BatchNormCache<T>& cache,
                                     const BatchNormLayer<T>& layer);

}  // namespace advfeat
