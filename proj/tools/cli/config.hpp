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

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "advfeat/analysis.hpp"
#include "advfeat/synth.hpp"
#include "advfeat/training.hpp"

namespace advfeat::cli {

/// Thrown for bad flags or config keys; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Flag values that override the config file when present.
struct TrainOverrides {
  std::optional<std::string> preset, variant, optimizer;
  std::optional<double> learning_rate, gamma, scale_train, scale_adv, momentum;
  std::optional<int> halve_every, epochs, batch_size, val_episodes, val_way, val_queries;
  std::optional<std::uint64_t> seed;
  bool no_flip = false;
  bool gradient_through_mask = false;
  bool no_select_best = false;
};

struct EvalOverrides {
  std::optional<std::string> split;
  std::optional<std::size_t> way, queries, episodes;
  std::optional<std::vector<std::size_t>> shots;
  std::optional<std::uint64_t> seed;
};

/// Fully resolved run configuration.
struct RunConfig {
  TrainConfig train;
  EvalSettings eval;
};

nlohmann::ordered_json to_json(const TrainConfig& c);
nlohmann::ordered_json to_json(const EvalSettings& e);
nlohmann::ordered_json to_json(const RunConfig& c);
nlohmann::ordered_json to_json(const SynthSpec& s);

/// Defaults, then the file's keys (unknown keys are usage errors), then the
/// flag overrides. An unset batch size follows the preset (64 paper, 32 desk).
RunConfig resolve_config(const std::optional<std::string>& config_path, const TrainOverrides& train,
                         const EvalOverrides& eval);

}  // namespace advfeat::cli
