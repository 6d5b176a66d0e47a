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

#include "advfeat/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "advfeat/parallel.hpp"

namespace advfeat {

std::vector<ShotResult> evaluate_shots(const Model& model, const Dataset& dataset, const EvalSettings& settings) {
  const Split& split = dataset.split(settings.split);
  const SplitEmbeddings emb = embed_split(model, split);
  std::vector<ShotResult> out;
  for (std::size_t shot : settings.shots) {
    out.push_back({shot, evaluate(split, emb, settings.way, shot, settings.queries, settings.episodes, settings.seed)});
  }
  return out;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

SweepResult gamma_sweep(const Dataset& dataset, std::span<const float> gammas, const TrainConfig& base,
                        const EvalSettings& eval, const TrainedHook& on_trained) {
  if (gammas.empty()) throw std::invalid_argument("gamma sweep needs at least one gamma");
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    if (!(gammas[i] > 0.0f && gammas[i] <= 1.0f)) throw std::invalid_argument("sweep gammas must lie in (0, 1]");
    if (i > 0 && !(gammas[i] > gammas[i - 1])) throw std::invalid_argument("sweep gammas must be strictly increasing");
  }
  SweepResult out;
  for (float g : gammas) {
    TrainConfig cfg = base;
    cfg.adversarial.gamma = g;
    try {
      const TrainResult trained = train_model(dataset, cfg);
      if (on_trained) on_trained(fmt("gamma_%g", g), trained);
      for (const auto& s : evaluate_shots(trained.best.model, dataset, eval)) {
        out.rows.push_back({g, eval.way, s.shot, s.result.mean_accuracy, s.result.ci95, false, {}});
      }
    } catch (const NumericError& e) {
      for (std::size_t shot : eval.shots) out.rows.push_back({g, eval.way, shot, 0.0, 0.0, true, e.what()});
    }
  }
  return out;
}

std::string sweep_csv(const SweepResult& result) {
  std::ostringstream os;
  os << "gamma,way,shot,mean_acc,ci95,status\n";
  char buf[160];
  for (const auto& r : result.rows) {
    std::snprintf(buf, sizeof buf, "%g,%zu,%zu,%.6f,%.6f,%s\n", static_cast<double>(r.gamma), r.way, r.shot,
                  r.mean_acc, r.ci95, r.diverged ? "diverged" : "ok");
    os << buf;
  }
  return os.str();
}

VulnerabilityCurve vulnerability(std::span<const NamedModel> models, const Split& split, std::span<const float> gammas,
                                 float scale_adv) {
  if (gammas.empty() || gammas.front() != 0.0f) throw std::invalid_argument("perturbation grid must start at 0");
  for (std::size_t i = 1; i < gammas.size(); ++i) {
    if (!(gammas[i] > gammas[i - 1])) throw std::invalid_argument("perturbation grid must be increasing");
  }
  VulnerabilityCurve out;
  for (const auto& m : models) {
    const auto acc = classifier_accuracies(*m.model, split, gammas, scale_adv);
    for (std::size_t i = 0; i < gammas.size(); ++i) out.rows.push_back({m.name, gammas[i], acc[i]});
  }
  return out;
}

double curve_auc(const VulnerabilityCurve& curve, const std::string& variant) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : curve.rows) {
    if (r.variant == variant) pts.emplace_back(r.gamma, r.accuracy);
  }
  if (pts.empty()) throw std::invalid_argument("no vulnerability rows for '" + variant + "'");
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += 0.5 * (pts[i].second + pts[i - 1].second) * (pts[i].first - pts[i - 1].first);
  }
  return area;
}

std::string vulnerability_csv(const VulnerabilityCurve& curve) {
  std::ostringstream os;
  os << "variant,gamma,train_acc\n";
  char buf[64];
  for (const auto& r : curve.rows) {
    std::snprintf(buf, sizeof buf, ",%g,%.6f\n", static_cast<double>(r.gamma), r.accuracy);
    os << r.variant << buf;
  }
  return os.str();
}

AttentionMap compute_attention(const Model& model, const Tensor& image, const AdversarialConfig& cfg) {
  const Tensor* ptr = &image;
  const Tensor maps = model.forward_low(stack_images(std::span<const Tensor* const>(&ptr, 1)));
  const MaskGradient mg = compute_mask_gradient(slice_leading(maps, 0), model.classifier(), cfg);
  return {mg.delta, adversarial_mask(mg.delta, cfg), mg.entropy};
}

PnmImage render_attention(const Tensor& values, std::size_t upscale) {
  if (values.rank() != 2) throw ShapeError("attention map must be [H,W]");
  if (upscale == 0) throw std::invalid_argument("upscale must be positive");
  double max_abs = 0.0;
  for (float v : values.data()) max_abs = std::max(max_abs, std::fabs(static_cast<double>(v)));
  const std::size_t h = values.dim(0), w = values.dim(1);
  PnmImage img{w * upscale, h * upscale, 1, 255, {}};
  img.samples.resize(img.width * img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double v = values[(y / upscale) * w + x / upscale];
      const double t = max_abs > 0.0 ? v / max_abs : 0.0;
      img.samples[y * img.width + x] = static_cast<std::uint16_t>(std::lround(128.0 + 127.0 * t));
    }
  }
  return img;
}

std::string mask_csv(const Tensor& values) {
  if (values.rank() != 2) throw ShapeError("mask must be [H,W]");
  std::ostringstream os;
  char buf[32];
  for (std::size_t i = 0; i < values.dim(0); ++i) {
    for (std::size_t j = 0; j < values.dim(1); ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(values[i * values.dim(1) + j]));
      if (j) os << ',';
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

Tensor parse_mask_csv(std::string_view text) {
  std::vector<float> vals;
  std::size_t rows = 0, cols = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t n = 0;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      char* end = nullptr;
      const float v = std::strtof(cell.c_str(), &end);
      if (end == cell.c_str()) throw FormatError("mask csv: bad number '" + cell + "'");
      vals.push_back(v);
      ++n;
    }
    if (rows == 0) cols = n;
    if (n != cols) throw FormatError("mask csv: ragged rows");
    ++rows;
  }
  if (rows == 0 || cols == 0) throw FormatError("mask csv: empty");
  Tensor out(Shape{rows, cols});
  std::copy(vals.begin(), vals.end(), out.data().begin());
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

}  // namespace

std::vector<AttentionFiles> export_attention(const Model& model, std::span<const Tensor> images,
                                             std::span<const std::string> stems, const std::filesystem::path& out_dir,
                                             const AdversarialConfig& cfg, std::size_t upscale) {
  if (images.size() != stems.size()) throw std::invalid_argument("one file stem per image required");
  std::filesystem::create_directories(out_dir);
  std::vector<AttentionFiles> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const AttentionMap a = compute_attention(model, images[i], cfg);
    AttentionFiles f{out_dir / (stems[i] + "_delta.csv"), out_dir / (stems[i] + "_delta.pgm"),
                     out_dir / (stems[i] + "_ma.csv")};
    write_text(f.delta_csv, mask_csv(a.delta.values));
    write_pnm(f.delta_pgm, render_attention(a.delta.values, upscale));
    write_text(f.adversarial_csv, mask_csv(a.adversarial.values));
    out.push_back(std::move(f));
  }
  return out;
}

const AblationSummary* AblationResult::find(Variant v, std::size_t shot) const {
  for (const auto& s : summary) {
    if (s.variant == v && s.shot == shot) return &s;
  }
  return nullptr;
}

AblationResult ablation_report(const Dataset& dataset, std::span<const Variant> variants,
                               std::span<const std::uint64_t> seeds, const TrainConfig& base, const EvalSettings& eval,
                               const TrainedHook& on_trained) {
  if (seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
  AblationResult out;
  for (Variant v : variants) {
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.variant = v;
      cfg.seed = seed;
      AblationRun run{v, seed, false, {}, {}};
      try {
        const TrainResult trained = train_model(dataset, cfg);
        if (on_trained) on_trained(std::string(to_string(v)) + "_seed" + std::to_string(seed), trained);
        run.shots = evaluate_shots(trained.best.model, dataset, eval);
        run.ok = true;
      } catch (const Error& e) {
        run.error = e.what();
      }
      out.runs.push_back(std::move(run));
    }
    for (std::size_t si = 0; si < eval.shots.size(); ++si) {
      std::vector<double> means;
      double single_ci = 0.0;
      for (const auto& r : out.runs) {
        if (r.variant != v || !r.ok) continue;
        means.push_back(r.shots[si].result.mean_accuracy);
        single_ci = r.shots[si].result.ci95;
      }
      AblationSummary s{v, eval.shots[si], means.size(), 0.0, 0.0};
      if (!means.empty()) {
        const EvalResult agg = summarize_accuracies(means);
        s.mean_acc = agg.mean_accuracy;
        s.ci95 = means.size() == 1 ? single_ci : agg.ci95;
      }
      out.summary.push_back(s);
    }
  }
  return out;
}

std::string ablation_csv(const AblationResult& result) {
  std::ostringstream os;
  os << "variant,shot,runs,mean_acc,ci95\n";
  char buf[128];
  for (const auto& s : result.summary) {
    std::snprintf(buf, sizeof buf, ",%zu,%zu,%.6f,%.6f\n", s.shot, s.runs, s.mean_acc, s.ci95);
    os << to_string(s.variant) << buf;
  }
  return os.str();
}

std::string ablation_runs_csv(const AblationResult& result) {
  std::ostringstream os;
  os << "variant,seed,status,shot,mean_acc,ci95\n";
  char buf[128];
  for (const auto& r : result.runs) {
    if (!r.ok) {
      os << to_string(r.variant) << ',' << r.seed << ",failed,,,\n";
      continue;
    }
    for (const auto& s : r.shots) {
      std::snprintf(buf, sizeof buf, ",ok,%zu,%.6f,%.6f\n", s.shot, s.result.mean_accuracy, s.result.ci95);
      os << to_string(r.variant) << ',' << r.seed << buf;
    }
  }
  return os.str();
}

}  // namespace advfeat
