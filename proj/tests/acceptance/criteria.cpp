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
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "acceptance.hpp"
#include "advfeat/analysis.hpp"
#include "advfeat/checkpoint.hpp"
#include "advfeat/synth.hpp"
#include "episodes.hpp"
#include "generators.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

namespace advfeat::acceptance {

namespace fs = std::filesystem;
using testing::Gen;

namespace {

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Problem {
  Tensor maps;
  CosineClassifier clf;
};

Problem random_problem(Gen& gen, std::size_t max_c, std::size_t max_hw, std::size_t max_n) {
  const std::size_t c = gen.size(1, max_c), h = gen.size(1, max_hw), w = gen.size(1, max_hw), n = gen.size(2, max_n);
  return {gen.normal_tensor<float>(Shape{c, h, w}), CosineClassifier{gen.normal_tensor<float>(Shape{n, c})}};
}

bool same_params(const Model& a, const Model& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!(*pa[i].tensor == *pb[i].tensor)) return false;
  }
  return true;
}

EvalSettings test_settings() { return EvalSettings{};  // 5-way, shots {1,5}, 15 queries, 1000 episodes, seed 0
}

struct ShotAcc {
  double one = 0, five = 0;
};

ShotAcc test_accuracy(const Model& m) {
  const auto r = evaluate_shots(m, desk_dataset(), test_settings());
  return {r[0].result.mean_accuracy, r[1].result.mean_accuracy};
}

std::string serialize(const TrainingState& s) {
  std::ostringstream os;
  save_checkpoint(s, os);
  return os.str();
}

}  // namespace

// Gradient oracle suite.
Verdict criterion_1(const Options&) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v{true, "", {}};
  constexpr std::size_t kInstances = 200;
  std::size_t total = 0;
  for (const auto& check : testing::gradient_checks()) {
    double worst = 0;
    for (std::size_t i = 0; i < kInstances; ++i) {
      Gen gen(2026, total + i);
      worst = std::max(worst, check.instance(gen));
    }
    total += kInstances;
    const bool ok = worst < check.tolerance;
    v.pass = v.pass && ok;
    v.details.push_back(fmt("%-34s %zu instances, max rel err %.3e (limit %.0e) %s", check.name.c_str(), kInstances,
                            worst, check.tolerance, ok ? "ok" : "EXCEEDED"));
  }
  const double sec = seconds_since(t0);
  if (sec >= 60.0) v.pass = false;
  v.summary = fmt("%zu FD instances over %zu gradient families in %.1f s (limit 60 s)", total,
                  testing::gradient_checks().size(), sec);
  return v;
}

// Linearity of the adversarial feature in gamma.
Verdict criterion_2(const Options&) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::size_t checks = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    Gen gen(2027, i);
    const auto p = random_problem(gen, 64, 8, 8);
    for (float gamma : {0.0f, 0.1f, 0.2f, 0.5f, 0.8f}) {
      const AdversarialConfig cfg{gamma, 5.0f, false};
      const auto mg = compute_mask_gradient(p.maps, p.clf, cfg);
      const Tensor xa = adversarial_feature(p.maps, adversarial_mask(mg.delta, cfg));
      const Tensor dx = perturbation_feature(p.maps, mg.delta);
      for (std::size_t c = 0; c < xa.numel(); ++c) {
        worst = std::max(worst, std::abs(double(xa[c]) - (double(mg.pooled[c]) + double(gamma) * dx[c])));
      }
      ++checks;
    }
  }
  Verdict v{worst < 1e-5, fmt("max |x_a - (x_l + gamma dx_l)| = %.3e over %zu (instance, gamma) pairs (limit 1e-5), %.2f s",
                              worst, checks, seconds_since(t0)),
            {}};
  return v;
}

// The mask step is an entropy ascent direction.
Verdict criterion_3(const Options&) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kInstances = 1000;
  int negative_analytic = 0, negative_fd = 0, ascents = 0, flat = 0;
  double min_fd = 1e300;
  for (int i = 0; i < kInstances; ++i) {
    Gen gen(2028, std::uint64_t(i));
    const auto p = random_problem(gen, 8, 4, 5);
    const AdversarialConfig cfg{1e-3f, 5.0f, false};
    const auto mg = compute_mask_gradient(p.maps, p.clf, cfg);
    const auto maps = testing::as_doubles<float>(p.maps.data());
    const auto w = testing::as_doubles<float>(p.clf.weights.data());
    const auto d = testing::as_doubles<float>(mg.delta.values.data());
    const std::size_t hw = d.size(), n = p.clf.n_classes();
    const std::vector<double> m0(hw, 1.0 / double(hw));

    // dH/dM (independent double oracle) along the library's delta
    const auto grad = testing::pooled_entropy_mask_grad(maps, m0, w, n, 5.0);
    const double norm = std::sqrt(testing::dot(d, d));
    // single-channel maps make the cosine head a sign function: delta is rounding noise around 0
    if (norm < 1e-15) {
      ++flat;
    } else {
      if (testing::dot(grad, d) < 0.0) ++negative_analytic;
      const double t = 1e-4;
      std::vector<double> up(hw), down(hw);
      for (std::size_t j = 0; j < hw; ++j) {
        up[j] = m0[j] + t * d[j] / norm;
        down[j] = m0[j] - t * d[j] / norm;
      }
      const double fd =
          (testing::pooled_entropy(maps, up, w, n, 5.0) - testing::pooled_entropy(maps, down, w, n, 5.0)) / (2 * t);
      min_fd = std::min(min_fd, fd);
      if (fd < -1e-10) ++negative_fd;
    }
    const Tensor xa = adversarial_feature(p.maps, adversarial_mask(mg.delta, cfg));
    const float h_a = entropy(softmax(cosine_logits(xa, p.clf, 5.0f)));
    const float h_l = entropy(softmax(cosine_logits(mg.pooled, p.clf, 5.0f)));
    if (h_a >= h_l - 1e-6f) ++ascents;
  }
  const double rate = double(ascents) / kInstances;
  Verdict v;
  v.pass = negative_analytic == 0 && negative_fd == 0 && rate >= 0.99;
  v.summary = fmt("directional derivative >= 0 on %d/%d (%d with delta == 0, FD min %.3e); entropy ascent at "
                  "gamma=1e-3 on %.1f%% (need >= 99%%), %.2f s",
                  kInstances - negative_analytic - negative_fd, kInstances, flat, min_fd, 100 * rate,
                  seconds_since(t0));
  return v;
}

// full at gamma 0 is exactly the pooled two-head variant.
Verdict criterion_4(const Options&) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset& data = desk_dataset();
  TrainConfig full = experiment_config({Variant::full, 0, 0.0f});
  TrainConfig ref = experiment_config({Variant::c5_c7_cls, 0, 0.0f});
  auto a = make_training_state(full, data.train.size());
  auto b = make_training_state(ref, data.train.size());
  Verdict v{same_params(a.model, b.model), "", {}};
  for (int e = 0; e < 3; ++e) {
    const auto ra = run_epochs(a, data.train, full, 1).front();
    const auto rb = run_epochs(b, data.train, ref, 1).front();
    const bool same = ra.l_h == rb.l_h && ra.l_l == rb.l_l && ra.total == rb.total && same_params(a.model, b.model);
    v.pass = v.pass && same;
    v.details.push_back(fmt("epoch %d: full(gamma=0) total %.9f, c5_c7_cls total %.9f, parameters %s", e, ra.total,
                            rb.total, same_params(a.model, b.model) ? "bitwise equal" : "DIFFER"));
  }
  v.summary = fmt("3 desk epochs, loss trajectory and parameters %s (%.0f s)", v.pass ? "bitwise identical" : "DIVERGE",
                  seconds_since(t0));
  return v;
}

// Ablation ordering and above-chance accuracy.
Verdict criterion_5(const Options& o) {
  std::map<Variant, ShotAcc> mean;
  Verdict v{true, "", {}};
  double worst_run = 1.0;
  for (auto var : kVariants) {
    for (auto s : kSeeds) {
      const RunKey key{var, s, kDefaultGamma};
      const auto acc = test_accuracy(load_run(o.cache, key).model);
      mean[var].one += acc.one / double(kSeeds.size());
      mean[var].five += acc.five / double(kSeeds.size());
      worst_run = std::min({worst_run, acc.one, acc.five});
      v.details.push_back(fmt("%-20s 1-shot %.4f  5-shot %.4f", key.name().c_str(), acc.one, acc.five));
    }
  }
  for (auto var : kVariants) {
    const bool ok = mean[var].one >= 0.35 && mean[var].five >= 0.35;
    v.pass = v.pass && ok;
    v.details.push_back(fmt("mean %-10s 1-shot %.4f  5-shot %.4f  %s", std::string(to_string(var)).c_str(),
                            mean[var].one, mean[var].five, ok ? ">= 0.35" : "BELOW 0.35"));
  }
  const bool order1 = mean[Variant::full].one >= mean[Variant::c5_cls].one;
  const bool order5 = mean[Variant::full].five >= mean[Variant::c5_cls].five;
  v.pass = v.pass && order1 && order5;
  v.summary = fmt("full vs c5_cls: 1-shot %.4f vs %.4f (%s), 5-shot %.4f vs %.4f (%s); every variant mean >= 0.35: %s; "
                  "lowest single run %.4f",
                  mean[Variant::full].one, mean[Variant::c5_cls].one, order1 ? "ok" : "VIOLATED",
                  mean[Variant::full].five, mean[Variant::c5_cls].five, order5 ? "ok" : "VIOLATED",
                  std::all_of(kVariants.begin(), kVariants.end(),
                              [&](Variant x) { return mean[x].one >= 0.35 && mean[x].five >= 0.35; })
                      ? "yes"
                      : "NO",
                  worst_run);
  return v;
}

// Robustness to feature perturbation.
Verdict criterion_6(const Options& o) {
  std::map<Variant, double> auc;
  Verdict v{true, "", {}};
  const auto& train = desk_dataset().train;
  for (auto var : kVariants) {
    for (auto s : kSeeds) {
      const RunKey key{var, s, kDefaultGamma};
      const TrainingState st = load_run(o.cache, key);
      const NamedModel nm[] = {{key.name(), &st.model}};
      const auto curve = vulnerability(nm, train, kVulnerabilityGammas, 5.0f);
      const double a = curve_auc(curve, key.name());
      auc[var] += a / double(kSeeds.size());
      std::string accs;
      for (const auto& r : curve.rows) accs += fmt(" %.3f", r.accuracy);
      v.details.push_back(fmt("%-20s AUC %.4f  acc over gamma {0,.1,.2,.4,.8,1.6}:%s", key.name().c_str(), a,
                              accs.c_str()));
    }
  }
  const bool adv = auc[Variant::c5_adv] > auc[Variant::c5_cls];
  const bool full = auc[Variant::full] > auc[Variant::c5_c7_cls];
  v.pass = adv && full;
  v.summary = fmt("mean AUC c5_adv %.4f > c5_cls %.4f: %s; full %.4f > c5_c7_cls %.4f: %s", auc[Variant::c5_adv],
                  auc[Variant::c5_cls], adv ? "yes" : "NO", auc[Variant::full], auc[Variant::c5_c7_cls],
                  full ? "yes" : "NO");
  return v;
}

// Stability across the mask step size.
Verdict criterion_7(const Options& o) {
  Verdict v{true, "", {}};
  double lo1 = 1, hi1 = 0, lo5 = 1, hi5 = 0;
  for (float g : kStabilityGammas) {
    const RunKey key{Variant::full, 0, g};
    const auto acc = test_accuracy(load_run(o.cache, key).model);
    lo1 = std::min(lo1, acc.one);
    hi1 = std::max(hi1, acc.one);
    lo5 = std::min(lo5, acc.five);
    hi5 = std::max(hi5, acc.five);
    v.details.push_back(fmt("%-20s 1-shot %.4f  5-shot %.4f", key.name().c_str(), acc.one, acc.five));
  }
  v.pass = hi1 - lo1 < 0.05 && hi5 - lo5 < 0.05;
  v.summary = fmt("full variant spread over gamma {0.1,0.2,0.4,0.8}: 1-shot %.2f pp, 5-shot %.2f pp (limit 5 pp)",
                  100 * (hi1 - lo1), 100 * (hi5 - lo5));
  return v;
}

// Evaluation protocol invariants.
Verdict criterion_8(const Options& o) {
  Verdict v{true, "", {}};
  const Dataset& data = desk_dataset();

  // one checkpoint serves both shot counts
  {
    const RunKey key{Variant::full, 0, kDefaultGamma};
    const TrainingState st = load_checkpoint(checkpoint_path(o.cache, key));
    const auto r = evaluate_shots(st.model, data, test_settings());
    const bool ok = r.size() == 2 && r[0].shot == 1 && r[1].shot == 5 && r[0].result.accuracies.size() == 1000 &&
                    r[1].result.accuracies.size() == 1000;
    v.pass = v.pass && ok;
    v.details.push_back(fmt("single checkpoint %s: 1-shot %.4f, 5-shot %.4f from one load %s", key.name().c_str(),
                            r[0].result.mean_accuracy, r[1].result.mean_accuracy, ok ? "ok" : "FAILED"));
  }

  // 5-shot >= 1-shot over seeds
  {
    double diff_all = 0;
    std::size_t runs = 0;
    bool per_variant = true;
    for (auto var : kVariants) {
      double diff = 0;
      for (auto s : kSeeds) {
        const auto acc = test_accuracy(load_run(o.cache, {var, s, kDefaultGamma}).model);
        diff += (acc.five - acc.one) / double(kSeeds.size());
      }
      diff_all += diff;
      ++runs;
      per_variant = per_variant && diff > 0;
      v.details.push_back(fmt("mean(5-shot - 1-shot) %-10s %+.4f", std::string(to_string(var)).c_str(), diff));
    }
    diff_all /= double(runs);
    const bool ok = diff_all > 0 && per_variant;
    v.pass = v.pass && ok;
    v.details.push_back(fmt("5-shot >= 1-shot: mean difference over all runs %+.4f %s", diff_all, ok ? "ok" : "FAILED"));
  }

  // sampler invariants as a property test
  {
    int bad = 0;
    std::string first;
    for (std::uint64_t i = 0; i < 2000; ++i) {
      Gen gen(2029, i);
      const Split& split = gen.coin() ? data.test : data.val;
      const std::size_t way = gen.size(1, split.size()), shot = gen.size(1, 10), queries = gen.size(0, 20);
      Rng rng = make_stream(i, streams::episodes);
      const Episode ep = sample_episode(split, way, shot, queries, rng);
      const std::string why = testing::episode_violation(ep, split, way, shot, queries);
      Rng again = make_stream(i, streams::episodes);
      const Episode ep2 = sample_episode(split, way, shot, queries, again);
      bool same = ep.support.size() == ep2.support.size();
      for (std::size_t k = 0; same && k < ep.support.size(); ++k) {
        same = ep.support[k].class_index == ep2.support[k].class_index &&
               ep.support[k].image_index == ep2.support[k].image_index;
      }
      if (!why.empty() || !same) {
        if (first.empty()) first = why.empty() ? "not reproducible" : why;
        ++bad;
      }
    }
    v.pass = v.pass && bad == 0;
    v.details.push_back(fmt("episode sampler: 2000 random (way, shot, queries) draws, %d violations%s%s", bad,
                            first.empty() ? "" : ", first: ", first.c_str()));
  }

  // an untrained model sits at chance
  {
    bool ok = true;
    for (auto s : kSeeds) {
      const Model m(Preset::desk, Variant::full, data.train.size(), s);
      const auto r = evaluate(data.test, m, 5, 1, 15, 1000, 0);
      const bool in = std::abs(r.mean_accuracy - 0.20) <= 0.05;
      if (s == 0) ok = in;
      v.details.push_back(fmt("untrained model (init seed %llu): 5-way 1-shot %.4f +- %.4f, %s [0.15, 0.25]%s",
                              static_cast<unsigned long long>(s), r.mean_accuracy, r.ci95, in ? "inside" : "OUTSIDE",
                              s == 0 ? "" : " (informational)"));
    }
    v.pass = v.pass && ok;
    v.details.push_back(std::string("untrained-at-chance check ") + (ok ? "ok" : "FAILED"));
  }
  v.summary = v.pass ? "all protocol invariants hold" : "at least one protocol invariant fails (details below)";
  return v;
}

// Persistence round trips.
Verdict criterion_9(const Options& o) {
  Verdict v{true, "", {}};
  const RunKey key{Variant::full, 0, kDefaultGamma};
  const std::string on_disk = [&] {
    load_run(o.cache, key);
    std::ifstream in(checkpoint_path(o.cache, key), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }();
  std::istringstream in(on_disk);
  const TrainingState st = load_checkpoint(in);
  const std::string resaved = serialize(st);
  const bool ckpt_ok = resaved == on_disk && !st.optimizer.first_moments().empty();
  v.details.push_back(fmt("checkpoint %s: %zu bytes, save(load(file)) %s, optimizer moments %zu", key.name().c_str(),
                          on_disk.size(), resaved == on_disk ? "byte-identical" : "DIFFERS",
                          st.optimizer.first_moments().size()));

  std::istringstream in2(resaved);
  const TrainingState st2 = load_checkpoint(in2);
  const auto e1 = evaluate(desk_dataset().test, st.model, 5, 1, 15, 1000, 0);
  const auto e2 = evaluate(desk_dataset().test, st2.model, 5, 1, 15, 1000, 0);
  const bool eval_ok = e1.accuracies == e2.accuracies;
  v.details.push_back(fmt("evaluation across save/load: %.6f vs %.6f, per-episode accuracies %s", e1.mean_accuracy,
                          e2.mean_accuracy, eval_ok ? "identical" : "DIFFER"));

  const fs::path root = fs::temp_directory_path() / "advfeat_acceptance_dataset";
  fs::remove_all(root);
  const Dataset& data = desk_dataset();
  write_dataset(data, root);
  const Dataset back = load_directory(root, data.image_size);
  bool data_ok = manifest_text(back) == manifest_text(data);
  std::size_t images = 0;
  for (auto s : {SplitKind::train, SplitKind::val, SplitKind::test}) {
    for (std::size_t c = 0; c < data.split(s).size(); ++c) {
      data_ok = data_ok && back.split(s)[c].name == data.split(s)[c].name &&
                back.split(s)[c].images == data.split(s)[c].images;
      images += data.split(s)[c].images.size();
    }
  }
  fs::remove_all(root);
  v.details.push_back(fmt("dataset write/load: %zu images %s", images, data_ok ? "bit-exact" : "DIFFER"));
  v.pass = ckpt_ok && eval_ok && data_ok;
  v.summary = fmt("checkpoint %s, dataset %s, evaluation %s", ckpt_ok ? "bit-exact" : "MISMATCH",
                  data_ok ? "bit-exact" : "MISMATCH", eval_ok ? "identical" : "MISMATCH");
  return v;
}

}  // namespace advfeat::acceptance
