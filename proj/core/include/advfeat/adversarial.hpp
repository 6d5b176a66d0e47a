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

#include "advfeat/head.hpp"
#include "advfeat/tensor.hpp"

namespace advfeat {

enum class MaskKind { uniform, gradient, adversarial };

/// Spatial weighting [H, W] over one sample's feature maps.
struct Mask {
  Tensor values;
  MaskKind kind = MaskKind::uniform;

  std::size_t height() const { return values.dim(0); }
  std::size_t width() const { return values.dim(1); }
};

struct AdversarialConfig {
  float gamma = 0.2f;      // step size on the averaging mask
  float scale_adv = 5.0f;  // cosine scale used for the entropy
  /// When set, the low-level loss is also differentiated through the mask
  /// step (second order). Off by default: the mask gradient is a constant.
  bool gradient_through_mask = false;

  /// gamma = 1 / scale_adv.
  static AdversarialConfig reciprocal(float scale_adv) { return {1.0f / scale_adv, scale_adv, false}; }
};

/// Every element 1/(H*W); pooling with it is global average pooling.
Mask uniform_mask(std::size_t height, std::size_t width);

/// out[c] = sum_{i,j} maps[c,i,j] * mask[i,j] for maps of shape [C,H,W].
Tensor masked_pool(const Tensor& maps, const Mask& mask);

/// Everything produced while differentiating the entropy of the pooled
/// prediction with respect to the averaging mask.
struct MaskGradient {
  Mask delta;           // dl_ent/dM at M0, kind == gradient
  Tensor pooled;        // x_l, global average pooled feature
  Tensor feature_grad;  // dl_ent/dx_l
  float entropy = 0;    // l_ent at x_l
};

/// Entropy of softmax(cosine_logits(x_l, scale_adv)) differentiated with
/// respect to M at M0: delta[i,j] = sum_c (dl_ent/dx_l)[c] * maps[c,i,j].
/// Reads the classifier; writes nothing.
MaskGradient compute_mask_gradient(const Tensor& maps, const CosineClassifier& clf, const AdversarialConfig& cfg);

Mask entropy_mask_gradient(const Tensor& maps, const CosineClassifier& clf, const AdversarialConfig& cfg);

/// M_a = M0 + gamma * delta.
Mask adversarial_mask(const Mask& gradient, const AdversarialConfig& cfg);

/// x_a = masked_pool(maps, M_a).
Tensor adversarial_feature(const Tensor& maps, const Mask& adversarial);

/// Perturbation direction dx_l = masked_pool(maps, delta); x_a = x_l + gamma * dx_l.
Tensor perturbation_feature(const Tensor& maps, const Mask& gradient);

struct AdversarialGrads {
  Tensor maps;     // [C,H,W]
  Tensor weights;  // [n_classes, feat_dim]; zeros unless gradient_through_mask
};

/// Backward of x_a with respect to the feature maps (and, when the config
/// asks for it, through the mask step into the maps and classifier weights).
AdversarialGrads adversarial_feature_backward(const Tensor& maps, const MaskGradient& grad, const Mask& adversarial,
                                              const CosineClassifier& clf, const AdversarialConfig& cfg,
                                              const Tensor& grad_feature);

}  // namespace advfeat
