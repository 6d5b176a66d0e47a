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


#include <filesystem>
#include <sstream>

#include "advfeat/checkpoint.hpp"
#include "advfeat/fewshot.hpp"
#include "advfeat/synth.hpp"
#include "doctest.h"
#include "generators.hpp"

using namespace advfeat;
using advfeat::testing::Gen;

namespace {

TrainingState trained_state(Variant v, OptimizerKind opt = OptimizerKind::adam) {
  TrainConfig cfg;
  cfg.variant = v;
  cfg.optimizer.kind = opt;
  auto state = make_training_state(cfg, 4);
  Gen gen(60, 0);
  Trainer t(state, cfg);
  for (int i = 0; i < 2; ++i) {
    const Tensor x = gen.uniform_tensor<float>(Shape{3, 3, 64, 64}, 0.0, 1.0);
    const std::size_t labels[] = {0, 1, 3};
    t.training_step(x, labels);
  }
  state.epoch = 7;
  return state;
}

std::string bytes_of(const TrainingState& s) {
  std::ostringstream os;
  save_checkpoint(s, os);
  return os.str();
}

}  // namespace

TEST_CASE("save -> load -> save is byte-identical for every variant and optimizer") {
  for (auto v : {Variant::full, Variant::c5_cls, Variant::c5_adv, Variant::c5_c7_cls}) {
    for (auto opt : {OptimizerKind::adam, OptimizerKind::sgd}) {
      const auto state = trained_state(v, opt);
      const std::string first = bytes_of(state);
      std::istringstream in(first);
      const TrainingState loaded = load_checkpoint(in);
      CHECK(bytes_of(loaded) == first);
      CHECK(loaded.epoch == 7);
      CHECK(loaded.optimizer.steps() == 2);
      CHECK(loaded.optimizer.config().kind == opt);
      CHECK(loaded.model.variant() == v);
      CHECK(loaded.model.has_high() == has_high_branch(v));
      const auto pa = state.model.parameters(), pb = loaded.model.parameters();
      for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i].tensor == *pb[i].tensor);
      const auto ba = state.model.buffers(), bb = loaded.model.buffers();
      for (std::size_t i = 0; i < ba.size(); ++i) CHECK(*ba[i].tensor == *bb[i].tensor);
      REQUIRE(loaded.optimizer.first_moments().size() == state.optimizer.first_moments().size());
      for (std::size_t i = 0; i < state.optimizer.first_moments().size(); ++i) {
        CHECK(loaded.optimizer.first_moments()[i] == state.optimizer.first_moments()[i]);
      }
      for (std::size_t i = 0; i < state.optimizer.second_moments().size(); ++i) {
        CHECK(loaded.optimizer.second_moments()[i] == state.optimizer.second_moments()[i]);
      }
    }
  }
}

TEST_CASE("an untrained state without moments round-trips") {
  TrainConfig cfg;
  const auto state = make_training_state(cfg, 3);
  const std::string first = bytes_of(state);
  std::istringstream in(first);
  CHECK(bytes_of(load_checkpoint(in)) == first);
}

TEST_CASE("training resumes identically from a loaded checkpoint") {
  TrainConfig cfg;
  auto a = trained_state(Variant::full);
  std::istringstream in(bytes_of(a));
  auto b = load_checkpoint(in);
  Gen gen(61, 0);
  const Tensor x = gen.uniform_tensor<float>(Shape{2, 3, 64, 64}, 0.0, 1.0);
  const std::size_t labels[] = {2, 0};
  Trainer(a, cfg).training_step(x, labels);
  Trainer(b, cfg).training_step(x, labels);
  CHECK(bytes_of(a) == bytes_of(b));
}

TEST_CASE("evaluation is identical before and after a round trip") {
  SynthSpec spec;
  spec.n_train = 2;
  spec.n_val = 2;
  spec.n_test = 3;
  spec.images_per_class = 10;
  const Dataset data = generate_synthetic(spec);
  const auto state = trained_state(Variant::c5_c7_cls);
  std::istringstream in(bytes_of(state));
  const auto loaded = load_checkpoint(in);
  const auto a = evaluate(data.test, state.model, 3, 1, 4, 20, 9);
  const auto b = evaluate(data.test, loaded.model, 3, 1, 4, 20, 9);
  CHECK(a.accuracies == b.accuracies);
}

TEST_CASE("loading into a mismatched model is a shape error") {
  const auto desk = trained_state(Variant::full);
  const std::string bytes = bytes_of(desk);
  {
    auto paper = TrainingState{Model(Preset::paper, Variant::full, 4, 0), Optimizer(), 0};
    std::istringstream in(bytes);
    CHECK_THROWS_AS(load_checkpoint_into(paper, in), ShapeError);
  }
  {
    auto c5 = TrainingState{Model(Preset::desk, Variant::c5_cls, 4, 0), Optimizer(), 0};
    std::istringstream in(bytes);
    CHECK_THROWS_AS(load_checkpoint_into(c5, in), ShapeError);
  }
  {
    auto other = TrainingState{Model(Preset::desk, Variant::full, 5, 0), Optimizer(), 0};
    std::istringstream in(bytes);
    CHECK_THROWS_AS(load_checkpoint_into(other, in), ShapeError);
  }
  {
    auto same = TrainingState{Model(Preset::desk, Variant::full, 4, 99), Optimizer(), 0};
    std::istringstream in(bytes);
    load_checkpoint_into(same, in);
    CHECK(bytes_of(same) == bytes);
  }
}

TEST_CASE("corrupt checkpoints are format errors") {
  const std::string bytes = bytes_of(trained_state(Variant::c5_cls));
  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream a(bad);
  CHECK_THROWS_AS(load_checkpoint(a), FormatError);
  bad = bytes;
  bad[4] = 9;  // version
  std::istringstream b(bad);
  CHECK_THROWS_AS(load_checkpoint(b), FormatError);
  std::istringstream c(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(c), FormatError);
  std::istringstream d(std::string{});
  CHECK_THROWS_AS(load_checkpoint(d), FormatError);
  CHECK_THROWS_AS(load_checkpoint(std::filesystem::path("/nonexistent/x.ckpt")), DataError);
}

TEST_CASE("file round trip") {
  const auto state = trained_state(Variant::c5_adv);
  const auto path = std::filesystem::temp_directory_path() / "advfeat_test_ckpt.bin";
  save_checkpoint(state, path);
  const auto loaded = load_checkpoint(path);
  CHECK(bytes_of(loaded) == bytes_of(state));
  std::filesystem::remove(path);
}
