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

#include "advfeat/fewshot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "advfeat/adversarial.hpp"
#include "advfeat/parallel.hpp"

namespace advfeat {

Episode sample_episode(const Split& split, std::size_t way, std::size_t shot, std::size_t queries, Rng& rng) {
  if (way == 0 || shot == 0) throw std::invalid_argument("episode needs way >= 1 and shot >= 1");
  if (split.size() < way) {
    throw DataError("split has " + std::to_string(split.size()) + " classes, episode needs " + std::to_string(way));
  }
  for (const auto& cls : split) {
    if (cls.images.size() < shot + queries) {
      throw DataError("class '" + cls.name + "' has " + std::to_string(cls.images.size()) + " images, episode needs " +
                      std::to_string(shot + queries));
    }
  }
  Episode ep{way, shot, queries, {}, {}};
  std::vector<std::size_t> classes(split.size());
  std::iota(classes.begin(), classes.end(), 0);
  // Partial Fisher-Yates: first `way` entries become the sampled classes.
  for (std::size_t i = 0; i < way; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, classes.size() - 1);
    std::swap(classes[i], classes[pick(rng)]);
  }
  for (std::size_t slot = 0; slot < way; ++slot) {
    const std::size_t c = classes[slot];
    std::vector<std::size_t> images(split[c].images.size());
    std::iota(images.begin(), images.end(), 0);
    for (std::size_t i = 0; i < shot + queries; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, images.size() - 1);
      std::swap(images[i], images[pick(rng)]);
    }
    for (std::size_t i = 0; i < shot; ++i) ep.support.push_back({c, images[i], slot});
    for (std::size_t i = shot; i < shot + queries; ++i) ep.query.push_back({c, images[i], slot});
  }
  return ep;
}

Tensor embed(const Model& model, const Tensor& images) {
  const Tensor maps = model.forward_low(images);
  const std::size_t b = maps.dim(0), c = maps.dim(1);
  const Mask m0 = uniform_mask(maps.dim(2), maps.dim(3));
  Tensor out(Shape{b, c});
  for (std::size_t i = 0; i < b; ++i) {
    const Tensor x = masked_pool(slice_leading(maps, i), m0);
    std::copy(x.data().begin(), x.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return out;
}

SplitEmbeddings embed_split(const Model& model, const Split& split, std::size_t batch_size) {
  SplitEmbeddings out;
  const std::size_t c = model.spec().channels[4];
  for (const auto& cls : split) {
    Tensor table(Shape{cls.images.size(), c});
    for (std::size_t start = 0; start < cls.images.size(); start += batch_size) {
      const std::size_t n = std::min(batch_size, cls.images.size() - start);
      std::vector<const Tensor*> ptrs;
      for (std::size_t i = 0; i < n; ++i) ptrs.push_back(&cls.images[start + i]);
      const Tensor e = embed(model, stack_images(ptrs));
      std::copy(e.data().begin(), e.data().end(), table.data().begin() + static_cast<std::ptrdiff_t>(start * c));
    }
    out.classes.push_back(std::move(table));
  }
  return out;
}

namespace {

std::vector<double> unit_row(std::span<const double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  const double den = std::sqrt(n) + 1e-8;
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= den;
  return out;
}

}  // namespace

std::vector<std::size_t> classify_queries(const Tensor& support, std::span<const std::size_t> support_slots,
                                          const Tensor& queries, std::size_t way) {
  if (support.rank() != 2 || queries.rank() != 2 || support.dim(1) != queries.dim(1)) {
    throw ShapeError("classify_queries: support/query feature shape mismatch");
  }
  if (support_slots.size() != support.dim(0)) throw ShapeError("classify_queries: one slot per support row");
  const std::size_t dim = support.dim(1);
  std::vector<std::vector<double>> sums(way, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> counts(way, 0);
  for (std::size_t r = 0; r < support.dim(0); ++r) {
    const std::size_t slot = support_slots[r];
    if (slot >= way) throw std::invalid_argument("classify_queries: support slot out of range");
    ++counts[slot];
    for (std::size_t d = 0; d < dim; ++d) sums[slot][d] += support[r * dim + d];
  }
  std::vector<std::vector<double>> protos(way);
  for (std::size_t s = 0; s < way; ++s) {
    if (counts[s] == 0) throw std::invalid_argument("classify_queries: slot without support");
    for (double& v : sums[s]) v /= static_cast<double>(counts[s]);
    protos[s] = unit_row(sums[s]);
  }
  std::vector<std::size_t> labels(queries.dim(0));
  std::vector<double> q(dim);
  for (std::size_t r = 0; r < queries.dim(0); ++r) {
    for (std::size_t d = 0; d < dim; ++d) q[d] = queries[r * dim + d];
    const auto qn = unit_row(q);
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < way; ++s) {
      double sim = 0.0;
      for (std::size_t d = 0; d < dim; ++d) sim += qn[d] * protos[s][d];
      if (sim > best_sim) {
        best_sim = sim;
        best = s;
      }
    }
    labels[r] = best;
  }
  return labels;
}

namespace {

Tensor gather_rows(const std::vector<EpisodeItem>& items, const SplitEmbeddings& emb) {
  if (items.empty()) throw std::invalid_argument("episode has no items");
  const std::size_t dim = emb.classes.at(items.front().class_index).dim(1);
  Tensor out(Shape{items.size(), dim});
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Tensor& table = emb.classes.at(items[i].class_index);
    auto row = table.data().subspan(items[i].image_index * dim, dim);
    std::copy(row.begin(), row.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return out;
}

}  // namespace

double classify_episode(const Episode& episode, const SplitEmbeddings& embeddings) {
  if (episode.query.empty()) return 0.0;
  std::vector<std::size_t> slots;
  for (const auto& it : episode.support) slots.push_back(it.slot);
  const auto predicted =
      classify_queries(gather_rows(episode.support, embeddings), slots, gather_rows(episode.query, embeddings),
                       episode.way);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == episode.query[i].slot;
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

double classify_episode(const Episode& episode, const Model& model, const Split& split) {
  return classify_episode(episode, embed_split(model, split));
}

EvalResult summarize_accuracies(std::vector<double> accuracies) {
  EvalResult r;
  const double n = static_cast<double>(accuracies.size());
  if (accuracies.empty()) return r;
  double sum = 0.0;
  for (double a : accuracies) sum += a;
  r.mean_accuracy = sum / n;
  if (accuracies.size() > 1) {
    double sq = 0.0;
    for (double a : accuracies) sq += (a - r.mean_accuracy) * (a - r.mean_accuracy);
    r.ci95 = 1.96 * std::sqrt(sq / (n - 1.0)) / std::sqrt(n);
  }
  r.accuracies = std::move(accuracies);
  return r;
}

EvalResult evaluate(const Split& split, const SplitEmbeddings& embeddings, std::size_t way, std::size_t shot,
                    std::size_t queries, std::size_t episodes, std::uint64_t seed) {
  if (episodes < 2) throw std::invalid_argument("evaluation needs at least 2 episodes");
  std::vector<double> acc(episodes);
  parallel_for(episodes, [&](std::size_t e) {
    Rng rng = make_stream(seed, streams::episodes, e);
    acc[e] = classify_episode(sample_episode(split, way, shot, queries, rng), embeddings);
  });
  return summarize_accuracies(std::move(acc));
}

EvalResult evaluate(const Split& split, const Model& model, std::size_t way, std::size_t shot, std::size_t queries,
                    std::size_t episodes, std::uint64_t seed) {
  return evaluate(split, embed_split(model, split), way, shot, queries, episodes, seed);
}

std::string eval_report_csv(std::span<const EvalReportRow> rows) {
  std::ostringstream os;
  os << "way,shot,episodes,mean_acc,ci95,seed,checkpoint\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.6f,%.6f,", r.way, r.shot, r.episodes, r.mean_acc, r.ci95);
    os << buf << r.seed << ',' << r.checkpoint << '\n';
  }
  return os.str();
}

}  // namespace advfeat
