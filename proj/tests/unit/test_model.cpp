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


#include <set>
#include <stdexcept>

#include "advfeat/model.hpp"
#include "doctest.h"
#include "generators.hpp"

using namespace advfeat;
using advfeat::testing::Gen;

namespace {

Tensor images(Gen& gen, std::size_t b, std::size_t s) { return gen.uniform_tensor<float>(Shape{b, 3, s, s}, 0.0, 1.0); }

}  // namespace

TEST_CASE("preset and variant names round-trip") {
  for (auto p : {Preset::paper, Preset::desk}) CHECK(parse_preset(to_string(p)) == p);
  for (auto v : {Variant::full, Variant::c5_cls, Variant::c5_adv, Variant::c5_c7_cls}) CHECK(parse_variant(to_string(v)) == v);
  CHECK(parse_variant("c5-cls") == Variant::c5_cls);
  CHECK(parse_variant("c5-c7-cls") == Variant::c5_c7_cls);
  CHECK_THROWS_AS(parse_variant("c6"), std::invalid_argument);
  CHECK_THROWS_AS(parse_preset("huge"), std::invalid_argument);
  CHECK(has_high_branch(Variant::full));
  CHECK(has_high_branch(Variant::c5_c7_cls));
  CHECK_FALSE(has_high_branch(Variant::c5_cls));
  CHECK_FALSE(has_high_branch(Variant::c5_adv));
  CHECK(uses_adversarial_mask(Variant::full));
  CHECK(uses_adversarial_mask(Variant::c5_adv));
  CHECK_FALSE(uses_adversarial_mask(Variant::c5_c7_cls));
}

TEST_CASE("desk preset: conv5 is 4x4 and conv7 collapses to 1x1") {
  Gen gen(40, 0);
  Model m(Preset::desk, Variant::full, 8, 0);
  const Tensor x = images(gen, 2, 64);
  const Tensor maps = m.forward_low(x);
  CHECK(maps.shape() == Shape{2, 64, 4, 4});
  const Tensor xh = m.forward_high(maps);
  CHECK(xh.shape() == Shape{2, 64});
  CHECK(m.classifier().weights.shape() == Shape{8, 64});
  CHECK_THROWS_AS(m.forward_low(images(gen, 1, 32)), ShapeError);
  CHECK_THROWS_AS(m.forward_high(Tensor(Shape{1, 64, 2, 2})), ShapeError);
}

TEST_CASE("paper preset: 128 channel stem, 512 wide conv4-conv7") {
  Gen gen(41, 0);
  Model m(Preset::paper, Variant::full, 4, 0);
  CHECK(m.spec().input_size == 128);
  CHECK(m.spec().feature_size() == 8);
  const Tensor maps = m.forward_low(images(gen, 1, 128));
  CHECK(maps.shape() == Shape{1, 512, 8, 8});
  CHECK(m.forward_high(maps).shape() == Shape{1, 512});
}

TEST_CASE("c5 variants have no conv6/conv7 stage") {
  for (auto v : {Variant::c5_cls, Variant::c5_adv}) {
    Model m(Preset::desk, v, 3, 0);
    CHECK_FALSE(m.has_high());
    CHECK_THROWS_AS(m.high(), std::logic_error);
    for (const auto& p : m.parameters()) CHECK_FALSE(p.name.starts_with("high."));
  }
}

TEST_CASE("parameters: unique names, one shared classifier, fixed order") {
  Model m(Preset::desk, Variant::full, 5, 0);
  const auto params = m.parameters();
  CHECK(params.size() == 13 * 4 + 1);
  std::set<std::string> names;
  int classifiers = 0;
  for (const auto& p : params) {
    names.insert(p.name);
    if (p.name.starts_with("classifier")) ++classifiers;
  }
  CHECK(names.size() == params.size());
  CHECK(classifiers == 1);
  CHECK(params.back().name == "classifier.weights");
  CHECK(params.back().tensor == &m.classifier().weights);
  CHECK(m.buffers().size() == 13 * 2);
}

TEST_CASE("initialisation: per-parameter streams of the seed") {
  Model a(Preset::desk, Variant::full, 5, 3), b(Preset::desk, Variant::full, 5, 3), c(Preset::desk, Variant::full, 5, 4);
  Model d(Preset::desk, Variant::c5_cls, 5, 3);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(*pa[i].tensor == *pb[i].tensor);
    if (!(*pa[i].tensor == *pc[i].tensor)) any_diff = true;
  }
  CHECK(any_diff);
  // the low stage and classifier do not depend on the variant
  const auto pd = d.parameters();
  for (const auto& p : pd) {
    for (const auto& q : pa) {
      if (q.name == p.name) CHECK(*q.tensor == *p.tensor);
    }
  }
}

TEST_CASE("train mode updates running statistics; eval mode is pure") {
  Gen gen(42, 0);
  Model m(Preset::desk, Variant::c5_cls, 3, 0);
  const Tensor x = images(gen, 2, 64);
  const auto before = *m.buffers()[0].tensor;
  const Tensor e1 = m.forward_low(x);
  const Tensor e2 = m.forward_low(x, Mode::eval, nullptr);
  CHECK(e1 == e2);
  CHECK(*m.buffers()[0].tensor == before);
  StageCache cache;
  m.forward_low(x, Mode::train, &cache);
  CHECK_FALSE(*m.buffers()[0].tensor == before);
  CHECK(cache.units.size() == m.low().units().size());
}

TEST_CASE("stage backward can skip the input gradient") {
  Gen gen(43, 0);
  Model m(Preset::desk, Variant::c5_cls, 3, 0);
  const Tensor x = images(gen, 2, 64);
  StageCache cache;
  const Tensor maps = m.forward_low(x, Mode::train, &cache);
  const Tensor gy = gen.normal_tensor<float>(maps.shape());
  std::vector<UnitGrads> g1, g2;
  const Tensor dx = m.low().backward(gy, cache, g1);
  const Tensor none = m.low().backward(gy, cache, g2, false);
  CHECK(dx.shape() == x.shape());
  CHECK(none.shape() == Shape{1});
  REQUIRE(g1.size() == g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i) {
    CHECK(g1[i].kernels == g2[i].kernels);
    CHECK(g1[i].gamma == g2[i].gamma);
  }
  const auto flat = flatten_grads(g1, nullptr, Tensor(Shape{3, 64}));
  CHECK(flat.size() == m.parameters().size());
  for (std::size_t i = 0; i < flat.size(); ++i) CHECK(flat[i].shape() == m.parameters()[i].tensor->shape());
}
