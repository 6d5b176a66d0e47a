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
#include <filesystem>
#include <string>
#include <vector>

#include "advfeat/data.hpp"
#include "advfeat/training.hpp"

namespace advfeat::acceptance {

struct Verdict {
  bool pass = false;
  std::string summary;
  std::vector<std::string> details;
};

struct Options {
  std::filesystem::path cache;
};

// ---- shared experiment models ----

// One 30-epoch desk training run.
struct RunKey {
  Variant variant;
  std::uint64_t seed;
  float gamma;

  std::string name() const;
};

inline constexpr int kEpochs = 30;
inline const std::vector<std::uint64_t> kSeeds{0, 1, 2};
inline const std::vector<Variant> kVariants{Variant::full, Variant::c5_cls, Variant::c5_adv, Variant::c5_c7_cls};
inline const std::vector<float> kStabilityGammas{0.1f, 0.2f, 0.4f, 0.8f};
inline constexpr float kDefaultGamma = 0.2f;

// The 12 variant x seed runs plus the extra gammas for the full variant
// (its gamma 0.2 seed 0 run is shared with the ablation grid).
std::vector<RunKey> all_runs();

const Dataset& desk_dataset();
TrainConfig experiment_config(const RunKey& key);

/// Trains every run without a cached checkpoint (all of them when `force`).
void train_runs(const std::filesystem::path& cache, bool force);

/// Loads a run's selected checkpoint, training it first when missing.
TrainingState load_run(const std::filesystem::path& cache, const RunKey& key);
std::filesystem::path checkpoint_path(const std::filesystem::path& cache, const RunKey& key);

// ---- criteria ----

Verdict criterion_1(const Options& o);
Verdict criterion_2(const Options& o);
Verdict criterion_3(const Options& o);
Verdict criterion_4(const Options& o);
Verdict criterion_5(const Options& o);
Verdict criterion_6(const Options& o);
Verdict criterion_7(const Options& o);
Verdict criterion_8(const Options& o);
Verdict criterion_9(const Options& o);

}  // namespace advfeat::acceptance
