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

#include <cmath>
#include <stdexcept>

#include "advfeat/model.hpp"
#include "advfeat/random.hpp"

namespace advfeat {

std::string_view to_string(Preset p) { return p == Preset::paper ? "paper" : "desk"; }

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::full:
      return "full";
    case Variant::c5_cls:
      return "c5_cls";
    case Variant::c5_adv:
      return "c5_adv";
    case Variant::c5_c7_cls:
      return "c5_c7_cls";
  }
  return "full";
}

Preset parse_preset(std::string_view s) {
  if (s == "paper") return Preset::paper;
  if (s == "desk") return Preset::desk;
  throw std::invalid_argument("unknown preset '" + std::string(s) + "' (expected paper or desk)");
}

Variant parse_variant(std::string_view s) {
  std::string norm(s);
  for (char& ch : norm) {
    if (ch == '-') ch = '_';
  }
  for (Variant v : {Variant::full, Variant::c5_cls, Variant::c5_adv, Variant::c5_c7_cls}) {
    if (norm == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(s) + "'");
}

bool has_high_branch(Variant v) { return v == Variant::full || v == Variant::c5_c7_cls; }
bool uses_adversarial_mask(Variant v) { return v == Variant::full || v == Variant::c5_adv; }

const PresetSpec& preset_spec(Preset p) {
  static const PresetSpec paper{128, {128, 128, 256, 512, 512, 512, 512}, true};
  static const PresetSpec desk{64, {32, 32, 64, 64, 64, 64, 64}, false};
  return p == Preset::paper ? paper : desk;
}

void Stage::add_unit(ConvUnit unit) {
  units_.push_back(std::move(unit));
  is_pool_.push_back(false);
}

void Stage::add_pool() { is_pool_.push_back(true); }

Tensor Stage::forward(const Tensor& x, Mode mode, StageCache* cache) {
  if (cache) {
    cache->units.clear();
    cache->pools.clear();
  }
  Tensor h = x;
  std::size_t u = 0;
  for (bool pool : is_pool_) {
    if (pool) {
      auto r = maxpool2x2(h);
      if (cache) cache->pools.push_back(std::move(r.indices));
      h = std::move(r.output);
      continue;
    }
    ConvUnit& unit = units_[u++];
    UnitCache uc;
    Tensor conv = conv2d_forward(h, unit.conv);
    Tensor normed = batchnorm_forward(conv, unit.bn, mode, cache ? &uc.bn : nullptr);
    Tensor act = leaky_relu(normed);
    if (cache) {
      uc.input = std::move(h);
      uc.pre_activation = std::move(normed);
      cache->units.push_back(std::move(uc));
    }
    h = std::move(act);
  }
  return h;
}

Tensor Stage::forward_eval(const Tensor& x) const {
  Tensor h = x;
  std::size_t u = 0;
  for (bool pool : is_pool_) {
    if (pool) {
      h = maxpool2x2(h).output;
      continue;
    }
    const ConvUnit& unit = units_[u++];
    h = leaky_relu(batchnorm_eval(conv2d_forward(h, unit.conv), unit.bn));
  }
  return h;
}

Tensor Stage::backward(const Tensor& grad_out, const StageCache& cache, std::vector<UnitGrads>& grads,
                       bool input_grad) const {
  if (cache.units.size() != units_.size()) throw std::logic_error("stage cache does not match stage");
  grads.resize(units_.size());
  Tensor g = grad_out;
  std::size_t u = units_.size();
  std::size_t p = cache.pools.size();
  for (std::size_t op = is_pool_.size(); op-- > 0;) {
    if (is_pool_[op]) {
      g = maxpool2x2_backward(g, cache.pools[--p]);
      continue;
    }
    --u;
    const ConvUnit& unit = units_[u];
    const UnitCache& uc = cache.units[u];
    Tensor g_norm = leaky_relu_backward(g, uc.pre_activation);
    auto bn = batchnorm_backward(g_norm, uc.bn, unit.bn);
    const bool first_op = op == 0;
    auto conv = conv2d_backward(bn.input, uc.input, unit.conv, input_grad || !first_op);
    grads[u] = UnitGrads{std::move(conv.kernels), std::move(conv.bias), std::move(bn.gamma), std::move(bn.beta)};
    g = std::move(conv.input);
  }
  return g;
}

namespace {

ConvUnit make_unit(std::size_t in, std::size_t out, std::size_t kernel, std::size_t padding) {
  return ConvUnit{ConvLayer<float>::make(in, out, kernel, padding), BatchNormLayer<float>::make(out)};
}

void init_kernels(Tensor& kernels, std::uint64_t seed, const std::string& name) {
  Rng rng = make_stream(seed, std::string(streams::init) + "/" + name);
  const std::size_t fan_in = kernels.dim(1) * kernels.dim(2) * kernels.dim(3);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (float& v : kernels.data()) v = static_cast<float>(dist(rng));
}

std::string unit_prefix(std::string_view stage, std::size_t i) {
  return std::string(stage) + "." + std::to_string(i) + ".";
}

}  // namespace

Model::Model(Preset preset, Variant variant, std::size_t n_classes, std::uint64_t seed)
    : preset_(preset), variant_(variant) {
  if (n_classes == 0) throw ShapeError("model needs at least one class");
  const PresetSpec& s = spec();
  const auto& ch = s.channels;
  std::size_t in = 3;
  for (std::size_t block = 0; block < 5; ++block) {
    if (block > 0) low_.add_pool();
    low_.add_unit(make_unit(in, ch[block], 3, 1));
    low_.add_unit(make_unit(ch[block], ch[block], 3, 1));
    in = ch[block];
  }
  if (has_high_branch(variant)) {
    Stage high;
    high.add_pool();
    high.add_unit(make_unit(ch[4], ch[5], 3, 1));
    high.add_unit(make_unit(ch[5], ch[5], 3, 1));
    if (s.pool_before_conv7) high.add_pool();
    high.add_unit(make_unit(ch[5], ch[6], 2, 0));
    high_ = std::move(high);
  }
  if (has_high_branch(variant) && ch[6] != ch[4]) throw ShapeError("shared classifier needs conv5 width == conv7 width");

  classifier_.weights = Tensor(Shape{n_classes, ch[4]});
  {
    Rng rng = make_stream(seed, std::string(streams::init) + "/classifier.weights");
    std::normal_distribution<double> dist(0.0, 1.0);
    for (float& v : classifier_.weights.data()) v = static_cast<float>(dist(rng));
  }
  for (auto& p : parameters()) {
    if (p.name.ends_with(".conv.kernels")) init_kernels(*p.tensor, seed, p.name);
  }
}

Stage& Model::high() {
  if (!high_) throw std::logic_error("variant " + std::string(to_string(variant_)) + " has no conv6/conv7 stage");
  return *high_;
}

const Stage& Model::high() const {
  if (!high_) throw std::logic_error("variant " + std::string(to_string(variant_)) + " has no conv6/conv7 stage");
  return *high_;
}

void Model::check_images(const Tensor& images) const {
  const std::size_t s = spec().input_size;
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != s || images.dim(3) != s) {
    throw ShapeError("expected images [B,3," + std::to_string(s) + "," + std::to_string(s) + "] for preset " +
                     std::string(to_string(preset_)) + ", got " + images.shape().to_string());
  }
}

void Model::check_maps(const Tensor& maps) const {
  const std::size_t f = spec().feature_size();
  if (maps.rank() != 4 || maps.dim(1) != spec().channels[4] || maps.dim(2) != f || maps.dim(3) != f) {
    throw ShapeError("expected conv5 maps [B," + std::to_string(spec().channels[4]) + "," + std::to_string(f) + "," +
                     std::to_string(f) + "], got " + maps.shape().to_string());
  }
}

Tensor Model::forward_low(const Tensor& images, Mode mode, StageCache* cache) {
  check_images(images);
  return low_.forward(images, mode, cache);
}

Tensor Model::forward_low(const Tensor& images) const {
  check_images(images);
  return low_.forward_eval(images);
}

Tensor Model::forward_high(const Tensor& maps, Mode mode, StageCache* cache) {
  check_maps(maps);
  Tensor out = high().forward(maps, mode, cache);
  return out.reshaped(Shape{out.dim(0), out.dim(1)});
}

Tensor Model::forward_high(const Tensor& maps) const {
  check_maps(maps);
  Tensor out = high().forward_eval(maps);
  return out.reshaped(Shape{out.dim(0), out.dim(1)});
}

namespace {

template <typename StageT, typename Ref>
void collect_params(StageT& stage, std::string_view prefix, std::vector<Ref>& out) {
  auto& units = stage.units();
  for (std::size_t i = 0; i < units.size(); ++i) {
    const std::string p = unit_prefix(prefix, i);
    out.push_back({p + "conv.kernels", &units[i].conv.kernels});
    out.push_back({p + "conv.bias", &units[i].conv.bias});
    out.push_back({p + "bn.gamma", &units[i].bn.gamma});
    out.push_back({p + "bn.beta", &units[i].bn.beta});
  }
}

template <typename StageT, typename Ref>
void collect_buffers(StageT& stage, std::string_view prefix, std::vector<Ref>& out) {
  auto& units = stage.units();
  for (std::size_t i = 0; i < units.size(); ++i) {
    const std::string p = unit_prefix(prefix, i);
    out.push_back({p + "bn.running_mean", &units[i].bn.running_mean});
    out.push_back({p + "bn.running_var", &units[i].bn.running_var});
  }
}

}  // namespace

std::vector<ParamRef> Model::parameters() {
  std::vector<ParamRef> out;
  collect_params(low_, "low", out);
  if (high_) collect_params(*high_, "high", out);
  out.push_back({"classifier.weights", &classifier_.weights});
  return out;
}

std::vector<ConstParamRef> Model::parameters() const {
  std::vector<ConstParamRef> out;
  collect_params(low_, "low", out);
  if (high_) collect_params(*high_, "high", out);
  out.push_back({"classifier.weights", &classifier_.weights});
  return out;
}

std::vector<ParamRef> Model::buffers() {
  std::vector<ParamRef> out;
  collect_buffers(low_, "low", out);
  if (high_) collect_buffers(*high_, "high", out);
  return out;
}

std::vector<ConstParamRef> Model::buffers() const {
  std::vector<ConstParamRef> out;
  collect_buffers(low_, "low", out);
  if (high_) collect_buffers(*high_, "high", out);
  return out;
}

std::vector<Tensor> flatten_grads(const std::vector<UnitGrads>& low, const std::vector<UnitGrads>* high,
                                  Tensor classifier) {
  std::vector<Tensor> out;
  auto push = [&out](const std::vector<UnitGrads>& units) {
    for (const auto& g : units) {
      out.push_back(g.kernels);
      out.push_back(g.bias);
      out.push_back(g.gamma);
      out.push_back(g.beta);
    }
  };
  push(low);
  if (high) push(*high);
  out.push_back(std::move(classifier));
  return out;
}

}  // namespace advfeat
