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

#include <algorithm>
#include <cmath>
#include <limits>

#include "advfeat/head.hpp"
#include "advfeat/nn.hpp"

namespace advfeat {

template <typename T>
PoolResult<T> maxpool2x2(const BasicTensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("maxpool2x2: input must be [B,C,H,W]");
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("maxpool2x2: odd spatial size " + x.shape().to_string());
  if (x.numel() > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("maxpool2x2: input too large");
  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult<T> r{BasicTensor<T>(Shape{b, c, oh, ow}), PoolIndices{x.shape(), {}}};
  r.indices.argmax.resize(r.output.numel());
  const auto src = x.data();
  auto dst = r.output.data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < b * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j, ++o) {
        const std::size_t top = base + (2 * i) * w + 2 * j;
        const std::size_t window[4] = {top, top + 1, top + w, top + w + 1};
        std::size_t best = window[0];
        for (std::size_t k = 1; k < 4; ++k) {
          if (src[window[k]] > src[best]) best = window[k];
        }
        dst[o] = src[best];
        r.indices.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2x2_backward(const BasicTensor<T>& grad_out, const PoolIndices& indices) {
  if (grad_out.numel() != indices.argmax.size()) throw ShapeError("maxpool2x2_backward: gradient/index mismatch");
  BasicTensor<T> grad_in(indices.input_shape);
  auto dst = grad_in.data();
  const auto src = grad_out.data();
  for (std::size_t o = 0; o < src.size(); ++o) dst[indices.argmax[o]] += src[o];
  return grad_in;
}

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope) {
  BasicTensor<T> y(x.shape());
  const T* __restrict src = x.data().data();
  T* __restrict dst = y.data().data();
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) {
    const T v = src[i];
    dst[i] = std::max(v, T(0)) + slope * std::min(v, T(0));
  }
  return y;
}

template <typename T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& grad_out, const BasicTensor<T>& input, T slope) {
  if (!(grad_out.shape() == input.shape())) throw ShapeError("leaky_relu_backward: shape mismatch");
  BasicTensor<T> g(input.shape());
  const T* __restrict x = input.data().data();
  const T* __restrict dy = grad_out.data().data();
  T* __restrict dx = g.data().data();
  const std::size_t n = input.numel();
  for (std::size_t i = 0; i < n; ++i) {
    const T k = x[i] >= T(0) ? T(1) : slope;
    dx[i] = k * dy[i];
  }
  return g;
}

namespace {

// Fixed-order multi-lane sums: deterministic, and not latency bound.
template <typename T>
double lane_sum(const T* __restrict p, std::size_t n) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += static_cast<double>(p[i + l]);
  }
  for (; i < n; ++i) acc[i % 8] += static_cast<double>(p[i]);
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
double lane_sq_dev(const T* __restrict p, std::size_t n, double mean) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) {
      const double d = static_cast<double>(p[i + l]) - mean;
      acc[l] += d * d;
    }
  }
  for (; i < n; ++i) {
    const double d = static_cast<double>(p[i]) - mean;
    acc[i % 8] += d * d;
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
double lane_dot(const T* __restrict a, const T* __restrict b, std::size_t n) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += static_cast<double>(a[i + l]) * static_cast<double>(b[i + l]);
  }
  for (; i < n; ++i) acc[i % 8] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
void check_bn_input(const BasicTensor<T>& x, const BatchNormLayer<T>& layer) {
  if (x.rank() != 4) throw ShapeError("batchnorm: input must be [B,C,H,W]");
  if (x.dim(1) != layer.channels()) throw ShapeError("batchnorm: channel mismatch");
}

}  // namespace

template <typename T>
BasicTensor<T> batchnorm_eval(const BasicTensor<T>& x, const BatchNormLayer<T>& layer) {
  check_bn_input(x, layer);
  const std::size_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  BasicTensor<T> y(x.shape());
  const auto src = x.data();
  auto dst = y.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double mean = layer.running_mean[ch];
    const double inv_std = 1.0 / std::sqrt(static_cast<double>(layer.running_var[ch]) + layer.epsilon);
    const double gamma = layer.gamma[ch], beta = layer.beta[ch];
    for (std::size_t n = 0; n < b; ++n) {
      const std::size_t base = (n * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        dst[base + i] = static_cast<T>(gamma * ((src[base + i] - mean) * inv_std) + beta);
      }
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, BatchNormLayer<T>& layer, Mode mode,
                                 BatchNormCache<T>* cache) {
  check_bn_input(x, layer);
  const std::size_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (mode == Mode::eval) {
    if (cache) {
      cache->mode = Mode::eval;
      cache->inv_std.assign(c, 0.0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        cache->inv_std[ch] = 1.0 / std::sqrt(static_cast<double>(layer.running_var[ch]) + layer.epsilon);
      }
      cache->normalized = BasicTensor<T>(x.shape());
      auto xh = cache->normalized.data();
      for (std::size_t n = 0; n < b; ++n) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t base = (n * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            xh[base + i] = static_cast<T>((x[base + i] - static_cast<double>(layer.running_mean[ch])) *
                                          cache->inv_std[ch]);
          }
        }
      }
    }
    return batchnorm_eval(x, layer);
  }
  if (b < 2) throw ShapeError("batchnorm: train mode needs batch size >= 2");

  const std::size_t count = b * hw;
  BasicTensor<T> y(x.shape());
  BasicTensor<T> normalized(x.shape());
  std::vector<double> inv_stds(c);
  const T* src = x.data().data();
  T* __restrict yp = y.data().data();
  T* __restrict np = normalized.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t n = 0; n < b; ++n) sum += lane_sum(src + (n * c + ch) * hw, hw);
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t n = 0; n < b; ++n) sq += lane_sq_dev(src + (n * c + ch) * hw, hw, mean);
    const double var = sq / static_cast<double>(count);
    const double inv_std = 1.0 / std::sqrt(var + layer.epsilon);
    inv_stds[ch] = inv_std;
    const double gamma = layer.gamma[ch], beta = layer.beta[ch];
    for (std::size_t n = 0; n < b; ++n) {
      const std::size_t base = (n * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double xh = (static_cast<double>(src[base + i]) - mean) * inv_std;
        np[base + i] = static_cast<T>(xh);
        yp[base + i] = static_cast<T>(gamma * xh + beta);
      }
    }
    const double unbiased = var * static_cast<double>(count) / static_cast<double>(count - 1);
    const double m = layer.momentum;
    layer.running_mean[ch] = static_cast<T>((1.0 - m) * layer.running_mean[ch] + m * mean);
    layer.running_var[ch] = static_cast<T>((1.0 - m) * layer.running_var[ch] + m * unbiased);
  }
  if (cache) {
    cache->mode = Mode::train;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_stds);
  }
  return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& grad_out, const BatchNormCache<T>& cache,
                                     const BatchNormLayer<T>& layer) {
  if (!(grad_out.shape() == cache.normalized.shape())) throw ShapeError("batchnorm_backward: shape mismatch");
  const std::size_t b = grad_out.dim(0), c = grad_out.dim(1), hw = grad_out.dim(2) * grad_out.dim(3);
  const double count = static_cast<double>(b * hw);
  BatchNormGrads<T> g{BasicTensor<T>(grad_out.shape()), BasicTensor<T>(layer.gamma.shape()),
                      BasicTensor<T>(layer.beta.shape())};
  const T* dy = grad_out.data().data();
  const T* xh = cache.normalized.data().data();
  T* __restrict dx = g.input.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t n = 0; n < b; ++n) {
      const std::size_t base = (n * c + ch) * hw;
      sum_dy += lane_sum(dy + base, hw);
      sum_dy_xh += lane_dot(dy + base, xh + base, hw);
    }
    g.beta[ch] = static_cast<T>(sum_dy);
    g.gamma[ch] = static_cast<T>(sum_dy_xh);
    const double scale = static_cast<double>(layer.gamma[ch]) * cache.inv_std[ch];
    const double mean_dy = sum_dy / count, mean_dy_xh = sum_dy_xh / count;
    for (std::size_t n = 0; n < b; ++n) {
      const std::size_t base = (n * c + ch) * hw;
      if (cache.mode == Mode::eval) {
        for (std::size_t i = 0; i < hw; ++i) dx[base + i] = static_cast<T>(scale * dy[base + i]);
      } else {
        for (std::size_t i = 0; i < hw; ++i) {
          dx[base + i] = static_cast<T>(scale * (dy[base + i] - mean_dy - xh[base + i] * mean_dy_xh));
        }
      }
    }
  }
  return g;
}

#define ADVFEAT_INSTANTIATE_LAYERS(T)                                                                       \
  template PoolResult<T> maxpool2x2(const BasicTensor<T>&);                                                 \
  template BasicTensor<T> maxpool2x2_backward(const BasicTensor<T>&, const PoolIndices&);                   \
  template BasicTensor<T> leaky_relu(const BasicTensor<T>&, T);                                             \
  template BasicTensor<T> leaky_relu_backward(const BasicTensor<T>&, const BasicTensor<T>&, T);             \
  template BasicTensor<T> batchnorm_eval(const BasicTensor<T>&, const BatchNormLayer<T>&);                  \
  template BasicTensor<T> batchnorm_forward(const BasicTensor<T>&, BatchNormLayer<T>&, Mode,                \
                                            BatchNormCache<T>*);                                            \
  template BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>&, const BatchNormCache<T>&,            \
                                                const BatchNormLayer<T>&);

ADVFEAT_INSTANTIATE_LAYERS(float)
ADVFEAT_INSTANTIATE_LAYERS(double)
#undef ADVFEAT_INSTANTIATE_LAYERS

// Classifier head, float-facing.

namespace {

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

Tensor to_tensor(const std::vector<double>& v) {
  std::vector<float> f(v.begin(), v.end());
  return Tensor(Shape{v.size()}, std::move(f));
}

}  // namespace

Tensor cosine_logits(const Tensor& x, const CosineClassifier& clf, float scale) {
  if (x.numel() != clf.feat_dim()) {
    throw ShapeError("cosine_logits: feature dim " + std::to_string(x.numel()) + " != classifier dim " +
                     std::to_string(clf.feat_dim()));
  }
  const auto xd = to_double(x.data());
  const auto wd = to_double(clf.weights.data());
  return to_tensor(head::cosine_logits<double>(xd, wd, clf.n_classes(), scale));
}

ProbVector softmax(const Tensor& logits) {
  logits.require_finite("softmax logits");
  const auto z = to_double(logits.data());
  return ProbVector{to_tensor(head::softmax<double>(z))};
}

float cross_entropy(const ProbVector& p, std::size_t label) {
  const auto v = to_double(p.probs.data());
  return static_cast<float>(head::cross_entropy<double>(v, label));
}

float entropy(const ProbVector& p) {
  const auto v = to_double(p.probs.data());
  return static_cast<float>(head::entropy<double>(v));
}

}  // namespace advfeat
