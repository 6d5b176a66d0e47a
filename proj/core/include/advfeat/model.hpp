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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "advfeat/head.hpp"
#include "advfeat/nn.hpp"
#include "advfeat/tensor.hpp"

namespace advfeat {

enum class Preset { paper, desk };

/// Training objective / architecture variant.
///  full       adversarial low-level loss + high-level loss (conv1-conv7)
///  c5_cls     low-level loss on globally pooled conv5 features only
///  c5_adv     adversarial low-level loss only
///  c5_c7_cls  pooled low-level loss + high-level loss, no adversarial mask
enum class Variant { full, c5_cls, c5_adv, c5_c7_cls };

std::string_view to_string(Preset p);
std::string_view to_string(Variant v);
Preset parse_preset(std::string_view s);
/// Accepts "c5_cls" and "c5-cls" spellings.
Variant parse_variant(std::string_view s);

bool has_high_branch(Variant v);
bool uses_adversarial_mask(Variant v);

struct PresetSpec {
  std::size_t input_size;
  std::array<std::size_t, 7> channels;  // conv1..conv7 widths
  bool pool_before_conv7;               // paper: pool-conv6-pool-conv7; desk: pool-conv6-conv7

  std::size_t feature_size() const { return input_size / 16; }  // conv5 spatial extent
};

const PresetSpec& preset_spec(Preset p);

/// Conv -> BN -> leaky ReLU.
struct ConvUnit {
  ConvLayer<float> conv;
  BatchNormLayer<float> bn;
};

struct UnitCache {
  Tensor input;
  BatchNormCache<float> bn;
  Tensor pre_activation;
};

struct StageCache {
  std::vector<UnitCache> units;
  std::vector<PoolIndices> pools;
};

struct UnitGrads {
  Tensor kernels, bias, gamma, beta;
};

/// Ordered sequence of conv units and 2x2 max pools.
class Stage {
 public:
  void add_unit(ConvUnit unit);
  void add_pool();

  std::vector<ConvUnit>& units() { return units_; }
  const std::vector<ConvUnit>& units() const { return units_; }

  /// Train mode updates BN running statistics.
  Tensor forward(const Tensor& x, Mode mode, StageCache* cache);
  Tensor forward_eval(const Tensor& x) const;
  /// Returns the input gradient (a default tensor when input_grad is false);
  /// parameter gradients land in `grads` (one entry per unit, overwritten).
  Tensor backward(const Tensor& grad_out, const StageCache& cache, std::vector<UnitGrads>& grads,
                  bool input_grad = true) const;

 private:
  std::vector<ConvUnit> units_;
  std::vector<bool> is_pool_;  // op sequence; false = next conv unit
};

struct ParamRef {
  std::string name;
  Tensor* tensor;
};

struct ConstParamRef {
  std::string name;
  const Tensor* tensor;
};

/// Backbone (conv1..conv5 low stage, optional conv6/conv7 high stage) plus
/// the cosine classifier shared by the low- and high-level losses.
class Model {
 public:
  /// Weights drawn from named sub-streams of `seed`, one per parameter.
  Model(Preset preset, Variant variant, std::size_t n_classes, std::uint64_t seed);

  Preset preset() const { return preset_; }
  Variant variant() const { return variant_; }
  const PresetSpec& spec() const { return preset_spec(preset_); }
  bool has_high() const { return high_.has_value(); }

  Stage& low() { return low_; }
  const Stage& low() const { return low_; }
  Stage& high();
  const Stage& high() const;
  CosineClassifier& classifier() { return classifier_; }
  const CosineClassifier& classifier() const { return classifier_; }

  /// images [B,3,S,S] -> conv5 maps [B,C,S/16,S/16].
  Tensor forward_low(const Tensor& images, Mode mode, StageCache* cache);
  Tensor forward_low(const Tensor& images) const;
  /// conv5 maps -> x_h [B,C].
  Tensor forward_high(const Tensor& maps, Mode mode, StageCache* cache);
  Tensor forward_high(const Tensor& maps) const;

  /// Trainable tensors in a fixed order (low units, high units, classifier).
  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;
  /// BN running statistics.
  std::vector<ParamRef> buffers();
  std::vector<ConstParamRef> buffers() const;

 private:
  void check_images(const Tensor& images) const;
  void check_maps(const Tensor& maps) const;

  Preset preset_;
  Variant variant_;
  Stage low_;
  std::optional<Stage> high_;
  CosineClassifier classifier_;
};

/// Flattens stage gradients into the order of Model::parameters(), appending
/// `classifier` last.
std::vector<Tensor> flatten_grads(const std::vector<UnitGrads>& low, const std::vector<UnitGrads>* high,
                                  Tensor classifier);

}  // namespace advfeat
