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

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "advfeat/adversarial.hpp"
#include "advfeat/data.hpp"
#include "advfeat/model.hpp"

namespace advfeat {

enum class OptimizerKind { adam, sgd };

std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;  // sgd only
};

/// Adam or momentum SGD over a fixed, ordered parameter list.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads, double learning_rate);

  const OptimizerConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }

  // State access for checkpointing. Moments are created lazily on the first
  // step; SGD keeps its velocity in first_moments().
  std::vector<Tensor>& first_moments() { return first_; }
  const std::vector<Tensor>& first_moments() const { return first_; }
  std::vector<Tensor>& second_moments() { return second_; }
  const std::vector<Tensor>& second_moments() const { return second_; }
  void set_steps(std::uint64_t n) { steps_ = n; }

 private:
  OptimizerConfig config_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  std::uint64_t steps_ = 0;
};

struct TrainConfig {
  Preset preset = Preset::desk;
  Variant variant = Variant::full;
  double learning_rate = 1e-3;
  int halve_every = 10;
  int epochs = 50;
  int batch_size = 32;
  float scale_train = 20.0f;
  AdversarialConfig adversarial{0.2f, 5.0f, false};
  bool augment_flip = true;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  // Model selection on validation N-way 1-shot accuracy; N is capped at the
  // number of validation classes.
  int val_episodes = 200;
  int val_way = 5;
  int val_queries = 15;
  bool select_best = true;

  /// lr0 * 0.5^floor(epoch / halve_every).
  double learning_rate_at(int epoch) const;
};

/// Batch means of the per-sample losses. l_ent is a diagnostic: it never
/// enters the parameter update.
struct LossRecord {
  double l_h = 0;
  double l_l = 0;
  double l_ent = 0;
  double total = 0;
};

struct TrainingState {
  Model model;
  Optimizer optimizer;
  std::uint32_t epoch = 0;  // completed epochs
};

TrainingState make_training_state(const TrainConfig& config, std::size_t n_classes);

/// One optimisation step per call over a labelled image batch, implementing
/// the variant's objective with a single forward pass.
class Trainer {
 public:
  Trainer(TrainingState& state, TrainConfig config);

  LossRecord training_step(const Tensor& images, std::span<const std::size_t> labels);

  /// Called with each sample's entropy value right after the mask gradient
  /// is computed. Test hook: the value may be overwritten.
  void set_entropy_observer(std::function<void(float&)> observer) { entropy_observer_ = std::move(observer); }

  const TrainConfig& config() const { return config_; }

 private:
  TrainingState& state_;
  TrainConfig config_;
  std::function<void(float&)> entropy_observer_;
};

struct EpochLog {
  int epoch = 0;
  double l_h = 0;
  double l_l = 0;
  double l_ent = 0;
  double lr = 0;
  double val_1shot_acc = 0;
};

struct TrainResult {
  TrainingState best;   // selected by validation accuracy (or last when disabled)
  TrainingState last;
  std::vector<EpochLog> log;
  int best_epoch = -1;
};

struct TrainCallbacks {
  std::function<void(const EpochLog&)> on_epoch;
};

/// Full training run on dataset.train with per-epoch validation. Throws
/// NumericError when a loss becomes non-finite.
TrainResult train_model(const Dataset& dataset, const TrainConfig& config, const TrainCallbacks& callbacks = {});

/// Runs `epochs` epochs on an existing state (no validation); returns the
/// per-epoch mean losses.
std::vector<LossRecord> run_epochs(TrainingState& state, const Split& train, const TrainConfig& config, int epochs);

/// Train-split classification accuracy through the model's own classifier
/// using x_l + gamma * dx_l (gamma = 0 gives the clean pooled feature).
double classifier_accuracy(const Model& model, const Split& split, float gamma, float scale_adv);
/// Same, for every gamma in `gammas` from one forward pass.
std::vector<double> classifier_accuracies(const Model& model, const Split& split, std::span<const float> gammas,
                                          float scale_adv);

std::string epoch_log_csv(const std::vector<EpochLog>& log);

}  // namespace advfeat
