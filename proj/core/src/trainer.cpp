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
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "advfeat/fewshot.hpp"
#include "advfeat/parallel.hpp"
#include "advfeat/training.hpp"

namespace advfeat {

double TrainConfig::learning_rate_at(int epoch) const {
  if (epoch < 0) throw std::invalid_argument("epoch must be non-negative");
  if (halve_every <= 0) return learning_rate;
  return learning_rate * std::pow(0.5, epoch / halve_every);
}

TrainingState make_training_state(const TrainConfig& config, std::size_t n_classes) {
  return TrainingState{Model(config.preset, config.variant, n_classes, config.seed), Optimizer(config.optimizer), 0};
}

Trainer::Trainer(TrainingState& state, TrainConfig config) : state_(state), config_(std::move(config)) {
  if (state_.model.variant() != config_.variant) throw std::invalid_argument("trainer variant differs from model");
  if (has_high_branch(config_.variant) != state_.model.has_high()) {
    throw std::invalid_argument("model high stage does not match variant");
  }
}

namespace {

struct HeadResult {
  double loss = 0;
  std::vector<double> grad_input;
  std::vector<double> grad_weights;
};

// CE at `scale` with the logit gradient scaled by `weight` (1/B).
HeadResult ce_head(std::span<const float> feature, std::span<const double> w, std::size_t n_classes, double scale,
                   std::size_t label, double weight) {
  const std::vector<double> x(feature.begin(), feature.end());
  const auto z = head::cosine_logits<double>(x, w, n_classes, scale);
  const auto p = head::softmax<double>(z);
  HeadResult r;
  r.loss = head::cross_entropy<double>(p, label);
  auto dz = head::cross_entropy_logit_grad<double>(p, label);
  for (double& v : dz) v *= weight;
  auto g = head::cosine_logits_backward<double>(x, w, n_classes, scale, dz);
  r.grad_input = std::move(g.input);
  r.grad_weights = std::move(g.weights);
  return r;
}

std::string describe(const char* what, std::size_t sample, double value) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "non-finite %s (%g) at batch sample %zu", what, value, sample);
  return buf;
}

}  // namespace

LossRecord Trainer::training_step(const Tensor& images, std::span<const std::size_t> labels) {
  Model& model = state_.model;
  const std::size_t b = images.rank() == 4 ? images.dim(0) : 0;
  if (b != labels.size()) throw ShapeError("training_step: one label per image required");
  if (b < 2) throw ShapeError("training_step: batch norm needs at least 2 images per batch");
  const std::size_t n_classes = model.classifier().n_classes();
  for (auto y : labels) {
    if (y >= n_classes) throw ShapeError("training_step: label " + std::to_string(y) + " out of range");
  }

  const bool adversarial = uses_adversarial_mask(config_.variant);
  AdversarialConfig adv = config_.adversarial;
  if (!adversarial) adv.gradient_through_mask = false;
  const double scale = config_.scale_train;
  const double inv_b = 1.0 / static_cast<double>(b);
  const auto& clf = model.classifier();
  const std::vector<double> w(clf.weights.data().begin(), clf.weights.data().end());

  StageCache low_cache;
  const Tensor maps = model.forward_low(images, Mode::train, &low_cache);
  const std::size_t c = maps.dim(1), h = maps.dim(2), wd = maps.dim(3);
  const std::size_t per_map = c * h * wd;

  std::vector<MaskGradient> mask_grads(b);
  parallel_for(b, [&](std::size_t i) { mask_grads[i] = compute_mask_gradient(slice_leading(maps, i), clf, adv); });
  double l_ent = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (entropy_observer_) entropy_observer_(mask_grads[i].entropy);
    l_ent += mask_grads[i].entropy;
  }

  // Low-level loss per sample.
  Tensor grad_maps(maps.shape());
  std::vector<double> low_losses(b);
  std::vector<std::vector<double>> clf_grads(b);
  std::vector<Tensor> second_order(b);
  const Mask m0 = uniform_mask(h, wd);
  parallel_for(b, [&](std::size_t i) {
    const Tensor x_maps = slice_leading(maps, i);
    const Mask mask = adversarial ? adversarial_mask(mask_grads[i].delta, adv) : m0;
    const Tensor feature = masked_pool(x_maps, mask);
    HeadResult r = ce_head(feature.data(), w, n_classes, scale, labels[i], inv_b);
    low_losses[i] = r.loss;
    Tensor u(Shape{c});
    for (std::size_t k = 0; k < c; ++k) u[k] = static_cast<float>(r.grad_input[k]);
    AdversarialGrads g = adversarial_feature_backward(x_maps, mask_grads[i], mask, clf, adv, u);
    std::copy(g.maps.data().begin(), g.maps.data().end(),
              grad_maps.data().begin() + static_cast<std::ptrdiff_t>(i * per_map));
    clf_grads[i] = std::move(r.grad_weights);
    if (adv.gradient_through_mask) second_order[i] = std::move(g.weights);
  });
  double l_l = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (!std::isfinite(low_losses[i])) throw NumericError(describe("low-level loss", i, low_losses[i]));
    l_l += low_losses[i];
  }
  l_l *= inv_b;

  std::vector<double> dw(w.size(), 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t k = 0; k < dw.size(); ++k) dw[k] += clf_grads[i][k];
    if (adv.gradient_through_mask) {
      const auto so = second_order[i].data();
      for (std::size_t k = 0; k < dw.size(); ++k) dw[k] += so[k];
    }
  }

  // High-level loss.
  double l_h = 0.0;
  std::vector<UnitGrads> high_grads;
  if (model.has_high()) {
    StageCache high_cache;
    const Tensor xh = model.forward_high(maps, Mode::train, &high_cache);
    std::vector<double> high_losses(b);
    Tensor grad_xh(Shape{b, c, 1, 1});
    parallel_for(b, [&](std::size_t i) {
      HeadResult r = ce_head(xh.data().subspan(i * c, c), w, n_classes, scale, labels[i], inv_b);
      high_losses[i] = r.loss;
      for (std::size_t k = 0; k < c; ++k) grad_xh[i * c + k] = static_cast<float>(r.grad_input[k]);
      clf_grads[i] = std::move(r.grad_weights);
    });
    for (std::size_t i = 0; i < b; ++i) {
      if (!std::isfinite(high_losses[i])) throw NumericError(describe("high-level loss", i, high_losses[i]));
      l_h += high_losses[i];
      for (std::size_t k = 0; k < dw.size(); ++k) dw[k] += clf_grads[i][k];
    }
    l_h *= inv_b;
    const Tensor back = model.high().backward(grad_xh, high_cache, high_grads);
    auto gm = grad_maps.data();
    const auto bd = back.data();
    for (std::size_t k = 0; k < gm.size(); ++k) gm[k] += bd[k];
  }

  std::vector<UnitGrads> low_grads;
  model.low().backward(grad_maps, low_cache, low_grads, false);

  Tensor clf_grad(clf.weights.shape());
  for (std::size_t k = 0; k < dw.size(); ++k) clf_grad[k] = static_cast<float>(dw[k]);
  std::vector<Tensor> grads = flatten_grads(low_grads, model.has_high() ? &high_grads : nullptr, std::move(clf_grad));
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (!grads[k].all_finite()) throw NumericError("non-finite gradient in parameter " + std::to_string(k));
  }

  auto params = model.parameters();
  std::vector<Tensor*> ptrs;
  ptrs.reserve(params.size());
  for (auto& p : params) ptrs.push_back(p.tensor);
  state_.optimizer.step(ptrs, grads, config_.learning_rate_at(static_cast<int>(state_.epoch)));

  LossRecord rec;
  rec.l_h = l_h;
  rec.l_l = l_l;
  rec.l_ent = l_ent * inv_b;
  rec.total = l_h + l_l;
  return rec;
}

std::vector<LossRecord> run_epochs(TrainingState& state, const Split& train, const TrainConfig& config, int epochs) {
  if (config.batch_size < 2) throw std::invalid_argument("batch_size must be at least 2");
  std::vector<std::pair<std::size_t, std::size_t>> items;  // (class, image)
  for (std::size_t c = 0; c < train.size(); ++c) {
    for (std::size_t i = 0; i < train[c].images.size(); ++i) items.emplace_back(c, i);
  }
  if (items.size() < 2) throw DataError("training split needs at least 2 images");
  Trainer trainer(state, config);
  std::vector<LossRecord> out;
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int e = 0; e < epochs; ++e) {
    const std::uint64_t epoch = state.epoch;
    Rng shuffle_rng = make_stream(config.seed, streams::shuffle, epoch);
    Rng aug_rng = make_stream(config.seed, streams::augmentation, epoch);
    auto order = items;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    LossRecord sum;
    std::size_t steps = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += bs) {
      const std::size_t n = std::min(bs, order.size() - start);
      if (n < 2) break;
      std::vector<Tensor> batch;
      std::vector<std::size_t> labels;
      batch.reserve(n);
      for (std::size_t k = 0; k < n; ++k) {
        const auto [c, i] = order[start + k];
        const Tensor& img = train[c].images[i];
        batch.push_back(config.augment_flip ? augment_flip(img, aug_rng) : img);
        labels.push_back(c);
      }
      std::vector<const Tensor*> ptrs;
      for (const auto& t : batch) ptrs.push_back(&t);
      const LossRecord r = trainer.training_step(stack_images(ptrs), labels);
      sum.l_h += r.l_h;
      sum.l_l += r.l_l;
      sum.l_ent += r.l_ent;
      sum.total += r.total;
      ++steps;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    sum.l_h *= inv;
    sum.l_l *= inv;
    sum.l_ent *= inv;
    sum.total *= inv;
    out.push_back(sum);
    ++state.epoch;
  }
  return out;
}

namespace {

TrainingState clone_state(const TrainingState& s) { return s; }

}  // namespace

TrainResult train_model(const Dataset& dataset, const TrainConfig& config, const TrainCallbacks& callbacks) {
  if (dataset.train.empty()) throw DataError("training split is empty");
  if (dataset.image_size != preset_spec(config.preset).input_size) {
    throw ShapeError("dataset image size " + std::to_string(dataset.image_size) + " does not match preset input " +
                     std::to_string(preset_spec(config.preset).input_size));
  }
  TrainResult result{make_training_state(config, dataset.train.size()), make_training_state(config, dataset.train.size()),
                     {}, -1};
  TrainingState& state = result.last;
  const bool validate = config.val_episodes >= 2 && dataset.val.size() >= 2;
  const std::size_t way = std::min<std::size_t>(static_cast<std::size_t>(std::max(config.val_way, 2)),
                                                dataset.val.size());
  double best_acc = -1.0;
  for (int e = 0; e < config.epochs; ++e) {
    const int epoch = static_cast<int>(state.epoch);
    const double lr = config.learning_rate_at(epoch);
    const LossRecord r = run_epochs(state, dataset.train, config, 1).front();
    EpochLog log{epoch, r.l_h, r.l_l, r.l_ent, lr, 0.0};
    if (validate) {
      log.val_1shot_acc = evaluate(dataset.val, state.model, way, 1, static_cast<std::size_t>(config.val_queries),
                                   static_cast<std::size_t>(config.val_episodes), config.seed)
                              .mean_accuracy;
    }
    result.log.push_back(log);
    if (callbacks.on_epoch) callbacks.on_epoch(log);
    const bool better = !config.select_best || !validate || log.val_1shot_acc > best_acc;
    if (better) {
      best_acc = log.val_1shot_acc;
      result.best = clone_state(state);
      result.best_epoch = epoch;
    }
  }
  if (result.best_epoch < 0) result.best = clone_state(state);
  return result;
}

std::vector<double> classifier_accuracies(const Model& model, const Split& split, std::span<const float> gammas,
                                          float scale_adv) {
  // the mask gradient does not depend on gamma, so every grid point shares one forward pass
  const AdversarialConfig adv{0.0f, scale_adv, false};
  const auto& clf = model.classifier();
  const std::vector<double> w(clf.weights.data().begin(), clf.weights.data().end());
  const double scale = clf.scale_train;
  const std::size_t n_gamma = gammas.size();
  std::size_t total = 0;
  std::vector<std::size_t> correct(n_gamma, 0);
  for (std::size_t cls = 0; cls < split.size(); ++cls) {
    const auto& images = split[cls].images;
    for (std::size_t start = 0; start < images.size(); start += 50) {
      const std::size_t n = std::min<std::size_t>(50, images.size() - start);
      std::vector<const Tensor*> ptrs;
      for (std::size_t i = 0; i < n; ++i) ptrs.push_back(&images[start + i]);
      const Tensor maps = model.forward_low(stack_images(ptrs));
      std::vector<char> hit(n * n_gamma, 0);
      parallel_for(n, [&](std::size_t i) {
        const Tensor x_maps = slice_leading(maps, i);
        const MaskGradient mg = compute_mask_gradient(x_maps, clf, adv);
        const Tensor dx = perturbation_feature(x_maps, mg.delta);
        std::vector<double> x(mg.pooled.numel());
        for (std::size_t g = 0; g < n_gamma; ++g) {
          const double gamma = gammas[g];
          for (std::size_t k = 0; k < x.size(); ++k) x[k] = static_cast<double>(mg.pooled[k]) + gamma * dx[k];
          const auto z = head::cosine_logits<double>(x, w, clf.n_classes(), scale);
          const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
          hit[i * n_gamma + g] = best == cls;
        }
      });
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t g = 0; g < n_gamma; ++g) correct[g] += static_cast<std::size_t>(hit[i * n_gamma + g]);
      }
      total += n;
    }
  }
  std::vector<double> out(n_gamma, 0.0);
  for (std::size_t g = 0; g < n_gamma && total > 0; ++g) {
    out[g] = static_cast<double>(correct[g]) / static_cast<double>(total);
  }
  return out;
}

double classifier_accuracy(const Model& model, const Split& split, float gamma, float scale_adv) {
  const float g[] = {gamma};
  return classifier_accuracies(model, split, g, scale_adv).front();
}

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,l_h,l_l,l_ent,lr,val_1shot_acc\n";
  char buf[192];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.8g,%.6f\n", e.epoch, e.l_h, e.l_l, e.l_ent, e.lr,
                  e.val_1shot_acc);
    os << buf;
  }
  return os.str();
}

}  // namespace advfeat
