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

#include "config.hpp"

#include <fstream>
#include <set>

namespace advfeat::cli {

using nlohmann::ordered_json;

ordered_json to_json(const TrainConfig& c) {
  ordered_json j;
  j["preset"] = std::string(to_string(c.preset));
  j["variant"] = std::string(to_string(c.variant));
  j["learning_rate"] = c.learning_rate;
  j["halve_every"] = c.halve_every;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["scale_train"] = c.scale_train;
  j["gamma"] = c.adversarial.gamma;
  j["scale_adv"] = c.adversarial.scale_adv;
  j["gradient_through_mask"] = c.adversarial.gradient_through_mask;
  j["augment_flip"] = c.augment_flip;
  j["optimizer"] = std::string(to_string(c.optimizer.kind));
  j["momentum"] = c.optimizer.momentum;
  j["seed"] = c.seed;
  j["val_episodes"] = c.val_episodes;
  j["val_way"] = c.val_way;
  j["val_queries"] = c.val_queries;
  j["select_best"] = c.select_best;
  return j;
}

ordered_json to_json(const EvalSettings& e) {
  ordered_json j;
  j["split"] = std::string(to_string(e.split));
  j["way"] = e.way;
  j["shots"] = e.shots;
  j["queries"] = e.queries;
  j["episodes"] = e.episodes;
  j["seed"] = e.seed;
  return j;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j = to_json(c.train);
  j["eval"] = to_json(c.eval);
  return j;
}

ordered_json to_json(const SynthSpec& s) {
  ordered_json j;
  j["train_classes"] = s.n_train;
  j["val_classes"] = s.n_val;
  j["test_classes"] = s.n_test;
  j["images_per_class"] = s.images_per_class;
  j["image_size"] = s.image_size;
  j["seed"] = s.seed;
  j["min_scale"] = s.min_scale;
  j["max_scale"] = s.max_scale;
  j["background_noise"] = s.background_noise;
  j["pixel_noise"] = s.pixel_noise;
  return j;
}

namespace {

template <typename T>
T get(const ordered_json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

template <typename Parse>
auto parse_or_usage(Parse&& parse, const std::string& what) {
  try {
    return parse();
  } catch (const std::invalid_argument& e) {
    throw UsageError(what + ": " + e.what());
  }
}

void check_keys(const ordered_json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw UsageError("unknown config key '" + k + "' in " + where);
  }
}

void apply_file(const ordered_json& j, RunConfig& rc, bool& batch_set) {
  check_keys(j,
             {"preset", "variant", "learning_rate", "halve_every", "epochs", "batch_size", "scale_train", "gamma",
              "scale_adv", "gradient_through_mask", "augment_flip", "optimizer", "momentum", "seed", "val_episodes",
              "val_way", "val_queries", "select_best", "eval"},
             "config");
  TrainConfig& t = rc.train;
  if (j.contains("preset")) t.preset = parse_or_usage([&] { return parse_preset(get<std::string>(j, "preset")); }, "preset");
  if (j.contains("variant")) {
    t.variant = parse_or_usage([&] { return parse_variant(get<std::string>(j, "variant")); }, "variant");
  }
  if (j.contains("learning_rate")) t.learning_rate = get<double>(j, "learning_rate");
  if (j.contains("halve_every")) t.halve_every = get<int>(j, "halve_every");
  if (j.contains("epochs")) t.epochs = get<int>(j, "epochs");
  if (j.contains("batch_size")) {
    t.batch_size = get<int>(j, "batch_size");
    batch_set = true;
  }
  if (j.contains("scale_train")) t.scale_train = get<float>(j, "scale_train");
  if (j.contains("gamma")) t.adversarial.gamma = get<float>(j, "gamma");
  if (j.contains("scale_adv")) t.adversarial.scale_adv = get<float>(j, "scale_adv");
  if (j.contains("gradient_through_mask")) t.adversarial.gradient_through_mask = get<bool>(j, "gradient_through_mask");
  if (j.contains("augment_flip")) t.augment_flip = get<bool>(j, "augment_flip");
  if (j.contains("optimizer")) {
    t.optimizer.kind = parse_or_usage([&] { return parse_optimizer(get<std::string>(j, "optimizer")); }, "optimizer");
  }
  if (j.contains("momentum")) t.optimizer.momentum = get<double>(j, "momentum");
  if (j.contains("seed")) t.seed = get<std::uint64_t>(j, "seed");
  if (j.contains("val_episodes")) t.val_episodes = get<int>(j, "val_episodes");
  if (j.contains("val_way")) t.val_way = get<int>(j, "val_way");
  if (j.contains("val_queries")) t.val_queries = get<int>(j, "val_queries");
  if (j.contains("select_best")) t.select_best = get<bool>(j, "select_best");
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, {"split", "way", "shots", "queries", "episodes", "seed"}, "config.eval");
    EvalSettings& ev = rc.eval;
    if (e.contains("split")) ev.split = parse_or_usage([&] { return parse_split(get<std::string>(e, "split")); }, "split");
    if (e.contains("way")) ev.way = get<std::size_t>(e, "way");
    if (e.contains("shots")) ev.shots = get<std::vector<std::size_t>>(e, "shots");
    if (e.contains("queries")) ev.queries = get<std::size_t>(e, "queries");
    if (e.contains("episodes")) ev.episodes = get<std::size_t>(e, "episodes");
    if (e.contains("seed")) ev.seed = get<std::uint64_t>(e, "seed");
  }
}

void validate(const RunConfig& rc) {
  const TrainConfig& t = rc.train;
  if (!(t.learning_rate > 0)) throw UsageError("learning_rate must be positive");
  if (t.epochs < 1) throw UsageError("epochs must be at least 1");
  if (t.batch_size < 2) throw UsageError("batch_size must be at least 2");
  if (t.halve_every < 1) throw UsageError("halve_every must be at least 1");
  if (!(t.scale_train > 0) || !(t.adversarial.scale_adv > 0)) throw UsageError("scales must be positive");
  if (!(t.adversarial.gamma >= 0)) throw UsageError("gamma must be non-negative");
  if (t.val_way < 1 || t.val_queries < 1 || t.val_episodes < 0) throw UsageError("bad validation settings");
  const EvalSettings& e = rc.eval;
  if (e.way < 1 || e.queries < 1 || e.episodes < 2 || e.shots.empty()) throw UsageError("bad evaluation settings");
  for (auto s : e.shots) {
    if (s < 1) throw UsageError("shot must be at least 1");
  }
}

}  // namespace

RunConfig resolve_config(const std::optional<std::string>& config_path, const TrainOverrides& o,
                         const EvalOverrides& eo) {
  RunConfig rc;
  bool batch_set = false;
  if (config_path) {
    std::ifstream in(*config_path);
    if (!in) throw UsageError("cannot read config file '" + *config_path + "'");
    ordered_json j;
    try {
      j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("config file '" + *config_path + "' is not valid JSON: " + e.what());
    }
    apply_file(j, rc, batch_set);
  }
  TrainConfig& t = rc.train;
  if (o.preset) t.preset = parse_or_usage([&] { return parse_preset(*o.preset); }, "--preset");
  if (o.variant) t.variant = parse_or_usage([&] { return parse_variant(*o.variant); }, "--variant");
  if (o.optimizer) t.optimizer.kind = parse_or_usage([&] { return parse_optimizer(*o.optimizer); }, "--optimizer");
  if (o.learning_rate) t.learning_rate = *o.learning_rate;
  if (o.gamma) t.adversarial.gamma = static_cast<float>(*o.gamma);
  if (o.scale_train) t.scale_train = static_cast<float>(*o.scale_train);
  if (o.scale_adv) t.adversarial.scale_adv = static_cast<float>(*o.scale_adv);
  if (o.momentum) t.optimizer.momentum = *o.momentum;
  if (o.halve_every) t.halve_every = *o.halve_every;
  if (o.epochs) t.epochs = *o.epochs;
  if (o.batch_size) {
    t.batch_size = *o.batch_size;
    batch_set = true;
  }
  if (o.val_episodes) t.val_episodes = *o.val_episodes;
  if (o.val_way) t.val_way = *o.val_way;
  if (o.val_queries) t.val_queries = *o.val_queries;
  if (o.seed) t.seed = *o.seed;
  if (o.no_flip) t.augment_flip = false;
  if (o.gradient_through_mask) t.adversarial.gradient_through_mask = true;
  if (o.no_select_best) t.select_best = false;
  if (!batch_set) t.batch_size = t.preset == Preset::paper ? 64 : 32;

  EvalSettings& e = rc.eval;
  if (eo.split) e.split = parse_or_usage([&] { return parse_split(*eo.split); }, "--split");
  if (eo.way) e.way = *eo.way;
  if (eo.queries) e.queries = *eo.queries;
  if (eo.episodes) e.episodes = *eo.episodes;
  if (eo.shots) e.shots = *eo.shots;
  if (eo.seed) e.seed = *eo.seed;
  validate(rc);
  return rc;
}

}  // namespace advfeat::cli
