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
#include <numeric>

#include "advfeat/fewshot.hpp"
#include "advfeat/synth.hpp"
#include "doctest.h"
#include "episodes.hpp"
#include "generators.hpp"

using namespace advfeat;
using namespace advfeat::testing;

namespace {

Split dummy_split(const std::vector<std::size_t>& sizes) {
  Split s;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    ClassImages ci{"c" + std::to_string(c), {}};
    for (std::size_t i = 0; i < sizes[c]; ++i) ci.images.push_back(Tensor(Shape{3, 1, 1}));
    s.push_back(std::move(ci));
  }
  return s;
}

const Dataset& synthetic() {
  static const Dataset d = [] {
    SynthSpec spec;
    spec.n_train = 2;
    spec.n_val = 2;
    spec.n_test = 5;
    spec.images_per_class = 40;
    return generate_synthetic(spec);
  }();
  return d;
}

SplitEmbeddings raw_pixels(const Split& split) {
  SplitEmbeddings out;
  for (const auto& cls : split) {
    const std::size_t dim = cls.images.front().numel();
    Tensor t(Shape{cls.images.size(), dim});
    for (std::size_t i = 0; i < cls.images.size(); ++i)
      std::copy(cls.images[i].data().begin(), cls.images[i].data().end(), t.data().begin() + std::ptrdiff_t(i * dim));
    out.classes.push_back(std::move(t));
  }
  return out;
}

}  // namespace

TEST_CASE("episode sampler invariants") {
  for (std::uint64_t i = 0; i < 500; ++i) {
    Gen gen(70, i);
    const std::size_t way = gen.size(1, 6), shot = gen.size(1, 5), queries = gen.size(0, 6);
    std::vector<std::size_t> sizes(way + gen.size(0, 4));
    for (auto& s : sizes) s = shot + queries + gen.size(0, 5);
    const Split split = dummy_split(sizes);
    Rng rng = make_stream(i, streams::episodes);
    const Episode ep = sample_episode(split, way, shot, queries, rng);
    INFO("case " << i);
    CHECK(episode_violation(ep, split, way, shot, queries) == "");
  }
}

TEST_CASE("episode sampling is a pure function of the stream") {
  const Split split = dummy_split({30, 30, 30, 30, 30, 30});
  Rng a = make_stream(5, streams::episodes, 3), b = make_stream(5, streams::episodes, 3);
  const Episode ea = sample_episode(split, 5, 5, 15, a), eb = sample_episode(split, 5, 5, 15, b);
  for (std::size_t i = 0; i < ea.query.size(); ++i) {
    CHECK(ea.query[i].class_index == eb.query[i].class_index);
    CHECK(ea.query[i].image_index == eb.query[i].image_index);
  }
}

TEST_CASE("insufficient splits are data errors") {
  Rng rng = make_stream(0, streams::episodes);
  CHECK_THROWS_AS(sample_episode(dummy_split({20, 20}), 3, 1, 5, rng), DataError);
  CHECK_THROWS_AS(sample_episode(dummy_split({20, 5, 20}), 3, 1, 5, rng), DataError);
  CHECK_THROWS_AS(sample_episode(dummy_split({20, 20}), 0, 1, 5, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_episode(dummy_split({20, 20}), 2, 0, 5, rng), std::invalid_argument);
}

TEST_CASE("classification is invariant to positive rescaling and slot permutation") {
  for (std::uint64_t i = 0; i < 100; ++i) {
    Gen gen(71, i);
    const std::size_t way = gen.size(2, 5), shot = gen.size(1, 3), dim = gen.size(2, 10), q = gen.size(1, 8);
    const Tensor support = gen.normal_tensor<float>(Shape{way * shot, dim});
    const Tensor queries = gen.normal_tensor<float>(Shape{q, dim});
    std::vector<std::size_t> slots;
    for (std::size_t s = 0; s < way; ++s)
      for (std::size_t k = 0; k < shot; ++k) slots.push_back(s);
    const auto base = classify_queries(support, slots, queries, way);

    Tensor scaled_q = queries;
    for (std::size_t r = 0; r < q; ++r) {
      const float f = static_cast<float>(gen.uniform(0.1, 10.0));
      for (std::size_t d = 0; d < dim; ++d) scaled_q[r * dim + d] *= f;
    }
    Tensor scaled_s = support;
    for (auto& v : scaled_s.data()) v *= 3.0f;
    CHECK(classify_queries(scaled_s, slots, scaled_q, way) == base);

    std::vector<std::size_t> perm(way);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), gen.rng());
    std::vector<std::size_t> permuted(slots.size());
    for (std::size_t r = 0; r < slots.size(); ++r) permuted[r] = perm[slots[r]];
    const auto moved = classify_queries(support, permuted, queries, way);
    for (std::size_t r = 0; r < q; ++r) CHECK(moved[r] == perm[base[r]]);
  }
}

TEST_CASE("ties go to the lowest slot; prototypes are support means") {
  const Tensor support(Shape{3, 2}, {1.0f, 0.0f, 1.0f, 0.0f, 0.0f, 1.0f});
  const std::size_t slots[] = {1, 0, 2};
  const Tensor query(Shape{1, 2}, {1.0f, 0.0f});
  CHECK(classify_queries(support, slots, query, 3) == std::vector<std::size_t>{0});

  // mean of (1,0) and (0,1) points at 45 degrees
  const Tensor s2(Shape{3, 2}, {1.0f, 0.0f, 0.0f, 1.0f, 1.0f, -0.2f});
  const std::size_t slots2[] = {0, 0, 1};
  const Tensor q2(Shape{1, 2}, {1.0f, 1.0f});
  CHECK(classify_queries(s2, slots2, q2, 2) == std::vector<std::size_t>{0});
  const std::size_t bad[] = {0, 0, 0};
  CHECK_THROWS_AS(classify_queries(s2, bad, q2, 2), std::invalid_argument);
}

TEST_CASE("summary statistics") {
  const auto constant = summarize_accuracies({0.6, 0.6, 0.6, 0.6});
  CHECK(constant.mean_accuracy == doctest::Approx(0.6));
  CHECK(constant.ci95 == 0.0);
  const auto two = summarize_accuracies({0.0, 1.0});
  CHECK(two.mean_accuracy == 0.5);
  CHECK(two.ci95 == doctest::Approx(1.96 * 0.5));
}

TEST_CASE("one-way episodes are always correct") {
  const auto& data = synthetic();
  Model m(Preset::desk, Variant::c5_cls, 2, 0);
  const auto r = evaluate(data.test, m, 1, 1, 5, 10, 0);
  CHECK(r.mean_accuracy == 1.0);
  CHECK(r.ci95 == 0.0);
  CHECK_THROWS_AS(evaluate(data.test, m, 5, 1, 5, 1, 0), std::invalid_argument);
}

TEST_CASE("raw-pixel nearest neighbour beats chance on the synthetic test classes") {
  const auto& data = synthetic();
  const auto emb = raw_pixels(data.test);
  const auto r = evaluate(data.test, emb, 5, 1, 15, 300, 0);
  MESSAGE("raw-pixel 5-way 1-shot: " << r.mean_accuracy << " +- " << r.ci95);
  CHECK(r.mean_accuracy - r.ci95 > 0.2);
}

TEST_CASE("evaluation is deterministic and independent of the model copy") {
  const auto& data = synthetic();
  Model m(Preset::desk, Variant::full, 2, 4);
  const auto emb = embed_split(m, data.test);
  CHECK(emb.classes.size() == 5);
  CHECK(emb.classes[0].shape() == Shape{40, 64});
  const auto a = evaluate(data.test, emb, 5, 5, 10, 50, 3);
  const auto b = evaluate(data.test, m, 5, 5, 10, 50, 3);
  CHECK(a.accuracies == b.accuracies);
  Rng rng = make_stream(3, streams::episodes, 7);
  const Episode ep = sample_episode(data.test, 5, 5, 10, rng);
  CHECK(classify_episode(ep, emb) == a.accuracies[7]);
  CHECK(classify_episode(ep, m, data.test) == a.accuracies[7]);
}

TEST_CASE("embedding matches pooled conv5 maps") {
  const auto& data = synthetic();
  Model m(Preset::desk, Variant::c5_cls, 2, 4);
  const Tensor img = data.test[0].images[0].reshaped(Shape{1, 3, 64, 64});
  const Tensor e = embed(m, img);
  const Tensor maps = m.forward_low(img);
  for (std::size_t c = 0; c < 64; ++c) {
    double s = 0;
    for (std::size_t j = 0; j < 16; ++j) s += maps[c * 16 + j];
    CHECK(e[c] == doctest::Approx(s / 16).epsilon(1e-5));
  }
}

TEST_CASE("eval report CSV") {
  const EvalReportRow rows[] = {{5, 1, 100, 0.5, 0.01, 0, "a.ckpt"}};
  const std::string csv = eval_report_csv(rows);
  CHECK(csv.starts_with("way,shot,episodes,mean_acc,ci95,seed,checkpoint\n5,1,100,"));
}
