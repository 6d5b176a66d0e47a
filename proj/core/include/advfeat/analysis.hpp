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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "advfeat/adversarial.hpp"
#include "advfeat/data.hpp"
#include "advfeat/fewshot.hpp"
#include "advfeat/netpbm.hpp"
#include "advfeat/training.hpp"

namespace advfeat {

/// Episodic test settings shared by the studies.
struct EvalSettings {
  SplitKind split = SplitKind::test;
  std::size_t way = 5;
  std::vector<std::size_t> shots{1, 5};
  std::size_t queries = 15;
  std::size_t episodes = 1000;
  std::uint64_t seed = 0;
};

struct ShotResult {
  std::size_t shot = 0;
  EvalResult result;
};

/// Evaluates one model at every shot count in `settings` on the same
/// embeddings.
std::vector<ShotResult> evaluate_shots(const Model& model, const Dataset& dataset, const EvalSettings& settings);

// ---- gamma sweep ----

struct SweepRow {
  float gamma = 0;
  std::size_t way = 0;
  std::size_t shot = 0;
  double mean_acc = 0;
  double ci95 = 0;
  bool diverged = false;
  std::string error;
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

inline const std::vector<float> kDefaultSweepGammas{0.1f, 0.2f, 0.4f, 0.8f};

using TrainedHook = std::function<void(const std::string& label, const TrainResult&)>;

/// One training run per gamma (everything else identical). Gammas must be
/// strictly increasing and in (0, 1]. A divergent run is flagged and the
/// sweep moves on.
SweepResult gamma_sweep(const Dataset& dataset, std::span<const float> gammas, const TrainConfig& base,
                        const EvalSettings& eval, const TrainedHook& on_trained = {});

/// CSV: gamma,way,shot,mean_acc,ci95,status
std::string sweep_csv(const SweepResult& result);

// ---- vulnerability ----

inline const std::vector<float> kVulnerabilityGammas{0.0f, 0.1f, 0.2f, 0.4f, 0.8f, 1.6f};

struct VulnerabilityRow {
  std::string variant;
  float gamma = 0;
  double accuracy = 0;
};

struct VulnerabilityCurve {
  std::vector<VulnerabilityRow> rows;
};

struct NamedModel {
  std::string name;
  const Model* model;
};

/// Classifies `split` through each model's own classifier with x_l + g * dx_l
/// for every g in `gammas` (which must start at 0 and increase).
VulnerabilityCurve vulnerability(std::span<const NamedModel> models, const Split& split, std::span<const float> gammas,
                                 float scale_adv);

/// Trapezoidal area under one variant's accuracy-vs-gamma curve.
double curve_auc(const VulnerabilityCurve& curve, const std::string& variant);

/// CSV: variant,gamma,train_acc
std::string vulnerability_csv(const VulnerabilityCurve& curve);

// ---- attention ----

struct AttentionMap {
  Mask delta;        // signed entropy gradient of the mask
  Mask adversarial;  // M_a
  float entropy = 0;
};

AttentionMap compute_attention(const Model& model, const Tensor& image, const AdversarialConfig& cfg);

/// Grayscale rendering, symmetric around zero: 0 -> 128, +max|v| -> 255,
/// -max|v| -> 1. Each cell becomes an upscale x upscale block.
PnmImage render_attention(const Tensor& values, std::size_t upscale = 1);

/// Comma-separated rows, 9 significant digits.
std::string mask_csv(const Tensor& values);
Tensor parse_mask_csv(std::string_view text);

struct AttentionFiles {
  std::filesystem::path delta_csv, delta_pgm, adversarial_csv;
};

/// Writes <stem>_delta.csv, <stem>_delta.pgm and <stem>_ma.csv per image.
std::vector<AttentionFiles> export_attention(const Model& model, std::span<const Tensor> images,
                                             std::span<const std::string> stems, const std::filesystem::path& out_dir,
                                             const AdversarialConfig& cfg, std::size_t upscale = 16);

// ---- ablation ----

inline const std::vector<Variant> kAblationVariants{Variant::c5_cls, Variant::c5_adv, Variant::c5_c7_cls,
                                                   Variant::full};

struct AblationRun {
  Variant variant;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<ShotResult> shots;
};

struct AblationSummary {
  Variant variant;
  std::size_t shot = 0;
  std::size_t runs = 0;
  double mean_acc = 0;
  double ci95 = 0;  // across seeds (episode CI when there is one run)
};

struct AblationResult {
  std::vector<AblationRun> runs;
  std::vector<AblationSummary> summary;

  const AblationSummary* find(Variant v, std::size_t shot) const;
};

/// Trains every variant for every seed (seed overrides base.seed). Failed
/// runs are recorded and excluded from the summary.
AblationResult ablation_report(const Dataset& dataset, std::span<const Variant> variants,
                               std::span<const std::uint64_t> seeds, const TrainConfig& base, const EvalSettings& eval,
                               const TrainedHook& on_trained = {});

/// CSV: variant,shot,runs,mean_acc,ci95
std::string ablation_csv(const AblationResult& result);
/// CSV: variant,seed,status,shot,mean_acc,ci95
std::string ablation_runs_csv(const AblationResult& result);

}  // namespace advfeat
