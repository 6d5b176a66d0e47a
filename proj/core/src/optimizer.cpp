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

#include "advfeat/training.hpp"

namespace advfeat {

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw std::invalid_argument("unknown optimizer '" + std::string(s) + "' (expected adam or sgd)");
}

void Optimizer::step(std::span<Tensor* const> params, std::span<const Tensor> grads, double learning_rate) {
  if (params.size() != grads.size()) throw std::logic_error("optimizer: parameter/gradient count mismatch");
  if (first_.empty()) {
    for (Tensor* p : params) {
      first_.emplace_back(p->shape());
      if (config_.kind == OptimizerKind::adam) second_.emplace_back(p->shape());
    }
  }
  if (first_.size() != params.size()) throw std::logic_error("optimizer: state does not match parameter list");
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!(grads[i].shape() == params[i]->shape())) {
      throw ShapeError("optimizer: gradient shape mismatch for parameter " + std::to_string(i));
    }
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = first_[i].data();
    if (config_.kind == OptimizerKind::sgd) {
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double vel = config_.momentum * m[j] + g[j];
        m[j] = static_cast<float>(vel);
        p[j] = static_cast<float>(p[j] - learning_rate * vel);
      }
      continue;
    }
    auto v = second_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double mj = b1 * m[j] + (1.0 - b1) * g[j];
      const double vj = b2 * v[j] + (1.0 - b2) * static_cast<double>(g[j]) * g[j];
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double m_hat = mj / correction1;
      const double v_hat = vj / correction2;
      p[j] = static_cast<float>(p[j] - learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon));
    }
  }
}

}  // namespace advfeat
