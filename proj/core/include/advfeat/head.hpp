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

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "advfeat/errors.hpp"
#include "advfeat/tensor.hpp"

namespace advfeat {

// Classifier head: scaled cosine logits, softmax, cross-entropy and entropy.
// The span templates are written against a generic scalar so they can also be
// evaluated with forward-mode dual numbers (see adversarial.cpp).

inline constexpr double kCosineEpsilon = 1e-8;
inline constexpr double kProbFloor = 1e-12;

namespace head {

template <typename T>
T clamp_prob(const T& p) {
  return p < T(kProbFloor) ? T(kProbFloor) : p;
}

template <typename T>
T norm(std::span<const T> v) {
  using std::sqrt;
  accum_t<T> s{};
  for (const T& x : v) s += accum_t<T>(x) * accum_t<T>(x);
  return T(sqrt(s));
}

/// logits[k] = scale * <x/(|x|+eps), w_k/(|w_k|+eps)>, weights row-major [n_classes, dim].
template <typename T>
std::vector<T> cosine_logits(std::span<const T> x, std::span<const T> weights, std::size_t n_classes, T scale) {
  const std::size_t dim = x.size();
  if (dim == 0 || weights.size() != n_classes * dim) throw ShapeError("cosine_logits: feature/weight size mismatch");
  const T x_den = norm(x) + T(kCosineEpsilon);
  std::vector<T> logits(n_classes);
  for (std::size_t k = 0; k < n_classes; ++k) {
    auto w = weights.subspan(k * dim, dim);
    const T w_den = norm(w) + T(kCosineEpsilon);
    accum_t<T> dot{};
    for (std::size_t c = 0; c < dim; ++c) dot += accum_t<T>(x[c]) * accum_t<T>(w[c]);
    logits[k] = scale * T(dot) / (x_den * w_den);
  }
  return logits;
}

template <typename T>
struct CosineGrads {
  std::vector<T> input;
  std::vector<T> weights;
};

namespace detail {

// Backward of u = v / (|v| + eps).
template <typename T>
std::vector<T> normalize_backward(std::span<const T> v, std::span<const T> du) {
  const T n = norm(v);
  const T den = n + T(kCosineEpsilon);
  std::vector<T> dv(v.size());
  accum_t<T> vdu{};
  for (std::size_t i = 0; i < v.size(); ++i) vdu += accum_t<T>(v[i]) * accum_t<T>(du[i]);
  const bool degenerate = !(n > T(0));
  for (std::size_t i = 0; i < v.size(); ++i) {
    dv[i] = degenerate ? du[i] / den : (du[i] - v[i] * T(vdu) / (n * den)) / den;
  }
  return dv;
}

}  // namespace detail

template <typename T>
CosineGrads<T> cosine_logits_backward(std::span<const T> x, std::span<const T> weights, std::size_t n_classes, T scale,
                                      std::span<const T> grad_logits) {
  const std::size_t dim = x.size();
  if (weights.size() != n_classes * dim || grad_logits.size() != n_classes) {
    throw ShapeError("cosine_logits_backward: size mismatch");
  }
  const T x_den = norm(x) + T(kCosineEpsilon);
  std::vector<T> x_hat(dim);
  for (std::size_t c = 0; c < dim; ++c) x_hat[c] = x[c] / x_den;

  std::vector<T> dx_hat(dim, T(0));
  CosineGrads<T> out{std::vector<T>(dim), std::vector<T>(weights.size())};
  std::vector<T> w_hat(dim);
  std::vector<T> dw_hat(dim);
  for (std::size_t k = 0; k < n_classes; ++k) {
    auto w = weights.subspan(k * dim, dim);
    const T w_den = norm(w) + T(kCosineEpsilon);
    const T g = scale * grad_logits[k];
    for (std::size_t c = 0; c < dim; ++c) {
      w_hat[c] = w[c] / w_den;
      dx_hat[c] += g * w_hat[c];
      dw_hat[c] = g * x_hat[c];
    }
    auto dw = detail::normalize_backward<T>(w, dw_hat);
    std::copy(dw.begin(), dw.end(), out.weights.begin() + static_cast<std::ptrdiff_t>(k * dim));
  }
  out.input = detail::normalize_backward<T>(x, dx_hat);
  return out;
}

/// Max-subtracted softmax.
template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  using std::exp;
  if (logits.empty()) throw ShapeError("softmax: empty logits");
  T top = logits[0];
  for (const T& z : logits) {
    if (top < z) top = z;
  }
  std::vector<T> p(logits.size());
  accum_t<T> total{};
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = exp(logits[k] - top);
    total += accum_t<T>(p[k]);
  }
  for (auto& v : p) v = T(accum_t<T>(v) / total);
  return p;
}

/// -ln p_y with p clamped to [1e-12, 1].
template <typename T>
T cross_entropy(std::span<const T> probs, std::size_t label) {
  using std::log;
  if (label >= probs.size()) throw ShapeError("cross_entropy: label out of range");
  return -log(clamp_prob(probs[label]));
}

/// sum_i -p_i ln p_i; terms with p below the clamp floor contribute ~0.
template <typename T>
T entropy(std::span<const T> probs) {
  using std::log;
  accum_t<T> h{};
  for (const T& p : probs) {
    if (p > T(0)) h -= accum_t<T>(p) * accum_t<T>(log(clamp_prob(p)));
  }
  return T(h);
}

/// d(cross_entropy o softmax)/d logits = p - onehot(label).
template <typename T>
std::vector<T> cross_entropy_logit_grad(std::span<const T> probs, std::size_t label) {
  if (label >= probs.size()) throw ShapeError("cross_entropy: label out of range");
  std::vector<T> g(probs.begin(), probs.end());
  g[label] -= T(1);
  return g;
}

/// d(entropy o softmax)/d logits_k = -p_k (ln p_k + H).
template <typename T>
std::vector<T> entropy_logit_grad(std::span<const T> probs) {
  using std::log;
  const T h = entropy(probs);
  std::vector<T> g(probs.size());
  for (std::size_t k = 0; k < probs.size(); ++k) g[k] = -probs[k] * (log(clamp_prob(probs[k])) + h);
  return g;
}

}  // namespace head

/// Cosine classifier with fixed scale factors: `scale_train` for the
/// classification losses, `scale_adv` for adversarial mask generation.
struct CosineClassifier {
  Tensor weights;  // [n_classes, feat_dim]
  float scale_train = 20.0f;
  float scale_adv = 5.0f;

  std::size_t n_classes() const { return weights.dim(0); }
  std::size_t feat_dim() const { return weights.dim(1); }
};

struct ProbVector {
  Tensor probs;  // [n_classes]
};

/// Tensor-facing head operations. Computed in double, rounded to float.
Tensor cosine_logits(const Tensor& x, const CosineClassifier& clf, float scale);
ProbVector softmax(const Tensor& logits);
float cross_entropy(const ProbVector& p, std::size_t label);
float entropy(const ProbVector& p);

}  // namespace advfeat
