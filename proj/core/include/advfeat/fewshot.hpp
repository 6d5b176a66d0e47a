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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advfeat/data.hpp"
#include "advfeat/model.hpp"
#include "advfeat/random.hpp"

namespace advfeat {

/// An image of the split, referenced by class and position, assigned to an
/// episode class slot.
struct EpisodeItem {
  std::size_t class_index;
  std::size_t image_index;
  std::size_t slot;
};

/// One N-way K-shot task. Slot s is the s-th sampled class; each slot has
/// exactly `shot` support and `queries` query items, all distinct images.
struct Episode {
  std::size_t way = 0;
  std::size_t shot = 0;
  std::size_t queries = 0;
  std::vector<EpisodeItem> support;
  std::vector<EpisodeItem> query;
};

/// Throws DataError unless the split has >= way classes, each with at least
/// shot + queries images.
Episode sample_episode(const Split& split, std::size_t way, std::size_t shot, std::size_t queries, Rng& rng);

/// Test-time embedding: eval-mode conv5 maps pooled with the uniform mask.
/// images [B,3,S,S] -> [B,C].
Tensor embed(const Model& model, const Tensor& images);

/// Per-class embedding matrices ([n_images, C]) for a whole split.
struct SplitEmbeddings {
  std::vector<Tensor> classes;
};

SplitEmbeddings embed_split(const Model& model, const Split& split, std::size_t batch_size = 50);

/// Nearest-prototype labelling by cosine similarity. Prototypes are the mean
/// of each slot's support rows (the support row itself for one shot). Ties go
/// to the lowest slot. support [N*K, C], queries [Q, C]; returns slots.
std::vector<std::size_t> classify_queries(const Tensor& support, std::span<const std::size_t> support_slots,
                                          const Tensor& queries, std::size_t way);

double classify_episode(const Episode& episode, const SplitEmbeddings& embeddings);
double classify_episode(const Episode& episode, const Model& model, const Split& split);

struct EvalResult {
  double mean_accuracy = 0;
  double ci95 = 0;  // 1.96 * sample stddev / sqrt(n)
  std::vector<double> accuracies;
};

EvalResult summarize_accuracies(std::vector<double> accuracies);

/// Episode e is drawn from make_stream(seed, "episodes", e).
EvalResult evaluate(const Split& split, const SplitEmbeddings& embeddings, std::size_t way, std::size_t shot,
                    std::size_t queries, std::size_t episodes, std::uint64_t seed);
EvalResult evaluate(const Split& split, const Model& model, std::size_t way, std::size_t shot, std::size_t queries,
                    std::size_t episodes, std::uint64_t seed);

struct EvalReportRow {
  std::size_t way, shot, episodes;
  double mean_acc, ci95;
  std::uint64_t seed;
  std::string checkpoint;
};

/// CSV with header way,shot,episodes,mean_acc,ci95,seed,checkpoint.
std::string eval_report_csv(std::span<const EvalReportRow> rows);

}  // namespace advfeat
