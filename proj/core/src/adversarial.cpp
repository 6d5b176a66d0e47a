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

#include "advfeat/adversarial.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace advfeat {

namespace {

// Forward-mode dual number: value plus one directional derivative.
struct Dual {
  double v = 0.0;
  double d = 0.0;

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)
  Dual(double value, double deriv) : v(value), d(deriv) {}

  Dual& operator+=(const Dual& o) {
    v += o.v;
    d += o.d;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    d -= o.d;
    return *this;
  }
  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
  friend Dual operator*(const Dual& a, const Dual& b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
  friend Dual operator/(const Dual& a, const Dual& b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }
  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
  friend Dual sqrt(const Dual& a) {
    const double s = std::sqrt(a.v);
    return {s, s > 0.0 ? a.d / (2.0 * s) : 0.0};
  }
  friend Dual log(const Dual& a) { return {std::log(a.v), a.d / a.v}; }
  friend Dual exp(const Dual& a) {
    const double e = std::exp(a.v);
    return {e, e * a.d};
  }
};

template <typename S>
head::CosineGrads<S> entropy_grads(std::span<const S> x, std::span<const S> w, std::size_t n_classes, S scale) {
  const auto z = head::cosine_logits<S>(x, w, n_classes, scale);
  const auto p = head::softmax<S>(z);
  const auto dz = head::entropy_logit_grad<S>(p);
  return head::cosine_logits_backward<S>(x, w, n_classes, scale, dz);
}

void check_maps(const Tensor& maps, const Mask& mask) {
  if (maps.rank() != 3) throw ShapeError("feature maps must be [C,H,W], got " + maps.shape().to_string());
  if (mask.values.rank() != 2 || maps.dim(1) != mask.height() || maps.dim(2) != mask.width()) {
    throw ShapeError("mask " + mask.values.shape().to_string() + " does not match feature maps " +
                     maps.shape().to_string());
  }
}

}  // namespace

Mask uniform_mask(std::size_t height, std::size_t width) {
  const float v = 1.0f / static_cast<float>(height * width);
  return Mask{Tensor::full(Shape{height, width}, v), MaskKind::uniform};
}

Tensor masked_pool(const Tensor& maps, const Mask& mask) {
  check_maps(maps, mask);
  const std::size_t c = maps.dim(0), hw = maps.dim(1) * maps.dim(2);
  Tensor out(Shape{c});
  const auto x = maps.data();
  const auto m = mask.values.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t j = 0; j < hw; ++j) s += static_cast<double>(x[ch * hw + j]) * m[j];
    out[ch] = static_cast<float>(s);
  }
  return out;
}

MaskGradient compute_mask_gradient(const Tensor& maps, const CosineClassifier& clf, const AdversarialConfig& cfg) {
  if (maps.rank() != 3) throw ShapeError("feature maps must be [C,H,W], got " + maps.shape().to_string());
  maps.require_finite("feature maps");
  const std::size_t c = maps.dim(0), hw = maps.dim(1) * maps.dim(2);
  if (c != clf.feat_dim()) throw ShapeError("feature maps channels do not match classifier");

  MaskGradient out;
  // pool in double: delta is a cancellation against x_l, so a float x_l costs ~3 digits
  const auto xm = maps.data();
  std::vector<double> x(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t j = 0; j < hw; ++j) x[ch] += xm[ch * hw + j];
    x[ch] /= static_cast<double>(hw);
  }
  out.pooled = masked_pool(maps, uniform_mask(maps.dim(1), maps.dim(2)));
  const std::vector<double> w(clf.weights.data().begin(), clf.weights.data().end());
  const auto z = head::cosine_logits<double>(x, w, clf.n_classes(), cfg.scale_adv);
  const auto p = head::softmax<double>(z);
  out.entropy = static_cast<float>(head::entropy<double>(p));
  const auto dz = head::entropy_logit_grad<double>(p);
  const auto g = head::cosine_logits_backward<double>(x, w, clf.n_classes(), cfg.scale_adv, dz).input;

  out.feature_grad = Tensor(Shape{c});
  for (std::size_t ch = 0; ch < c; ++ch) out.feature_grad[ch] = static_cast<float>(g[ch]);

  out.delta = Mask{Tensor(Shape{maps.dim(1), maps.dim(2)}), MaskKind::gradient};
  for (std::size_t j = 0; j < hw; ++j) {
    double s = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) s += g[ch] * xm[ch * hw + j];
    out.delta.values[j] = static_cast<float>(s);
  }
  out.delta.values.require_finite("mask gradient");
  return out;
}

Mask entropy_mask_gradient(const Tensor& maps, const CosineClassifier& clf, const AdversarialConfig& cfg) {
  return compute_mask_gradient(maps, clf, cfg).delta;
}

Mask adversarial_mask(const Mask& gradient, const AdversarialConfig& cfg) {
  if (gradient.kind != MaskKind::gradient) throw std::invalid_argument("adversarial_mask expects a gradient mask");
  Mask out = uniform_mask(gradient.height(), gradient.width());
  out.kind = MaskKind::adversarial;
  auto m = out.values.data();
  const auto dm = gradient.values.data();
  for (std::size_t j = 0; j < m.size(); ++j) m[j] = m[j] + cfg.gamma * dm[j];
  return out;
}

Tensor adversarial_feature(const Tensor& maps, const Mask& adversarial) { return masked_pool(maps, adversarial); }

Tensor perturbation_feature(const Tensor& maps, const Mask& gradient) { return masked_pool(maps, gradient); }

AdversarialGrads adversarial_feature_backward(const Tensor& maps, const MaskGradient& grad, const Mask& adversarial,
                                              const CosineClassifier& clf, const AdversarialConfig& cfg,
                                              const Tensor& grad_feature) {
  check_maps(maps, adversarial);
  const std::size_t c = maps.dim(0), hw = maps.dim(1) * maps.dim(2);
  if (grad_feature.numel() != c) throw ShapeError("adversarial_feature_backward: gradient size mismatch");

  AdversarialGrads out{Tensor(maps.shape()), Tensor(clf.weights.shape())};
  const auto ma = adversarial.values.data();
  const auto u = grad_feature.data();
  auto dx = out.maps.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t j = 0; j < hw; ++j) dx[ch * hw + j] = u[ch] * ma[j];
  }
  if (!cfg.gradient_through_mask) return out;

  // x_a = x_l + gamma * sum_j (g . X_j) X_j with g = dl_ent/dx_l(x_l, W). The
  // mask-held-constant term is above; the rest flows through delta's
  // dependence on X_j and through g, whose Jacobians (the entropy Hessian and
  // the mixed x/W derivative) are applied along v = sum_j (u . X_j) X_j by a
  // forward-mode pass.
  const auto xm = maps.data();
  const auto g = grad.feature_grad.data();
  std::vector<double> ux(hw, 0.0);
  std::vector<double> v(c, 0.0);
  for (std::size_t j = 0; j < hw; ++j) {
    double s = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) s += static_cast<double>(u[ch]) * xm[ch * hw + j];
    ux[j] = s;
    for (std::size_t ch = 0; ch < c; ++ch) v[ch] += s * xm[ch * hw + j];
  }

  std::vector<Dual> xd(c);
  for (std::size_t ch = 0; ch < c; ++ch) xd[ch] = Dual(grad.pooled[ch], v[ch]);
  std::vector<Dual> wd(clf.weights.data().begin(), clf.weights.data().end());
  const auto second = entropy_grads<Dual>(xd, wd, clf.n_classes(), Dual(cfg.scale_adv));

  const double gamma = cfg.gamma;
  const double m0 = 1.0 / static_cast<double>(hw);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t j = 0; j < hw; ++j) {
      dx[ch * hw + j] += static_cast<float>(gamma * (ux[j] * g[ch] + second.input[ch].d * m0));
    }
  }
  auto dw = out.weights.data();
  for (std::size_t i = 0; i < dw.size(); ++i) dw[i] = static_cast<float>(gamma * second.weights[i].d);
  return out;
}

}  // namespace advfeat
