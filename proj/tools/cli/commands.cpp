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

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "advfeat/analysis.hpp"
#include "advfeat/checkpoint.hpp"
#include "advfeat/netpbm.hpp"
#include "advfeat/synth.hpp"
#include "cli.hpp"
#include "config.hpp"

namespace advfeat::cli {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw DataError("cannot write '" + path.string() + "'");
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_file(path, j.dump(2) + "\n"); }

// <base>/<run name>, where the default name is a local timestamp plus the
// command.
fs::path make_run_dir(const fs::path& base, const std::string& command, const std::optional<std::string>& name) {
  std::string leaf;
  if (name) {
    leaf = *name;
  } else {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y%m%d-%H%M%S") << '-' << command;
    leaf = os.str();
  }
  const fs::path dir = base / leaf;
  fs::create_directories(dir);
  return dir;
}

struct Common {
  std::optional<std::string> config;
  TrainOverrides train;
  EvalOverrides eval;
};

void add_train_options(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file; flags override its keys");
  cmd->add_option("--preset", c.train.preset, "paper | desk");
  cmd->add_option("--variant", c.train.variant, "full | c5_cls | c5_adv | c5_c7_cls");
  cmd->add_option("--lr", c.train.learning_rate, "initial learning rate");
  cmd->add_option("--halve-every", c.train.halve_every, "halve the learning rate every N epochs");
  cmd->add_option("--epochs", c.train.epochs, "training epochs");
  cmd->add_option("--batch-size", c.train.batch_size, "images per step");
  cmd->add_option("--scale", c.train.scale_train, "cosine scale s for the training losses");
  cmd->add_option("--scale-adv", c.train.scale_adv, "cosine scale for the entropy");
  cmd->add_option("--gamma", c.train.gamma, "mask step size");
  cmd->add_option("--optimizer", c.train.optimizer, "adam | sgd");
  cmd->add_option("--momentum", c.train.momentum, "sgd momentum");
  cmd->add_option("--seed", c.train.seed, "master seed");
  cmd->add_option("--val-episodes", c.train.val_episodes, "validation episodes per epoch (0 disables)");
  cmd->add_option("--val-way", c.train.val_way, "validation way (capped at the class count)");
  cmd->add_option("--val-queries", c.train.val_queries, "validation queries per class");
  cmd->add_flag("--no-flip", c.train.no_flip, "disable random horizontal flips");
  cmd->add_flag("--grad-through-mask", c.train.gradient_through_mask,
                "differentiate the low-level loss through the mask step");
  cmd->add_flag("--no-select-best", c.train.no_select_best, "keep the last epoch instead of the best validation one");
}

void add_eval_options(CLI::App* cmd, Common& c) {
  cmd->add_option("--split", c.eval.split, "split to evaluate on (train | val | test)");
  cmd->add_option("--way", c.eval.way, "classes per episode");
  cmd->add_option("--shot", c.eval.shots, "support images per class; comma list allowed")->delimiter(',');
  cmd->add_option("--queries", c.eval.queries, "query images per class");
  cmd->add_option("--episodes", c.eval.episodes, "episodes to average");
  cmd->add_option("--eval-seed", c.eval.seed, "episode sampling seed");
}

Dataset load_for(const TrainConfig& cfg, const std::string& data) {
  return load_directory(data, preset_spec(cfg.preset).input_size);
}

// ---- gen-synth ----

struct GenSynthArgs {
  std::string out;
  SynthSpec spec;
};

int gen_synth(const GenSynthArgs& a, std::ostream& out) {
  const Dataset ds = generate_synthetic(a.spec);
  write_dataset(ds, a.out);
  write_json(fs::path(a.out) / "synth.json", to_json(a.spec));
  out << "wrote " << ds.train.size() << " train, " << ds.val.size() << " val, " << ds.test.size()
      << " test classes to " << a.out << "\n";
  return kExitOk;
}

// ---- train ----

struct TrainArgs {
  Common common;
  std::string data, out;
};

int train(const TrainArgs& a, std::ostream& out) {
  const RunConfig rc = resolve_config(a.common.config, a.common.train, a.common.eval);
  fs::create_directories(a.out);
  write_json(fs::path(a.out) / "config.json", to_json(rc));
  const Dataset ds = load_for(rc.train, a.data);
  TrainCallbacks cb;
  cb.on_epoch = [&out](const EpochLog& e) {
    out << "epoch " << e.epoch << " l_h=" << e.l_h << " l_l=" << e.l_l << " l_ent=" << e.l_ent << " lr=" << e.lr
        << " val_1shot=" << e.val_1shot_acc << std::endl;
  };
  const TrainResult r = train_model(ds, rc.train, cb);
  write_file(fs::path(a.out) / "train_log.csv", epoch_log_csv(r.log));
  save_checkpoint(r.best, fs::path(a.out) / "best.ckpt");
  save_checkpoint(r.last, fs::path(a.out) / "last.ckpt");
  out << "best epoch " << r.best_epoch << "; checkpoints in " << a.out << "\n";
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  Common common;
  std::string checkpoint, data;
  std::optional<std::string> report;
};

int eval(const EvalArgs& a, std::ostream& out) {
  RunConfig rc = resolve_config(a.common.config, a.common.train, a.common.eval);
  const TrainingState st = load_checkpoint(fs::path(a.checkpoint));
  if (a.common.train.preset && parse_preset(*a.common.train.preset) != st.model.preset()) {
    throw ShapeError("checkpoint preset " + std::string(to_string(st.model.preset())) + " does not match --preset " +
                     *a.common.train.preset);
  }
  const Dataset ds = load_directory(a.data, st.model.spec().input_size);
  std::vector<EvalReportRow> rows;
  for (const auto& s : evaluate_shots(st.model, ds, rc.eval)) {
    rows.push_back({rc.eval.way, s.shot, rc.eval.episodes, s.result.mean_accuracy, s.result.ci95, rc.eval.seed,
                    a.checkpoint});
  }
  const std::string csv = eval_report_csv(rows);
  if (a.report) {
    write_file(*a.report, csv);
  } else {
    out << csv;
  }
  return kExitOk;
}

// ---- sweep ----

struct SweepArgs {
  Common common;
  std::string data, out;
  std::optional<std::string> run_name;
  std::vector<float> gammas = kDefaultSweepGammas;
};

void save_trained(const fs::path& dir, const std::string& label, const TrainResult& r) {
  fs::create_directories(dir);
  save_checkpoint(r.best, dir / (label + ".ckpt"));
  write_file(dir / (label + "_log.csv"), epoch_log_csv(r.log));
}

int sweep(const SweepArgs& a, std::ostream& out) {
  const RunConfig rc = resolve_config(a.common.config, a.common.train, a.common.eval);
  const fs::path dir = make_run_dir(a.out, "sweep", a.run_name);
  auto j = to_json(rc);
  j["gammas"] = a.gammas;
  write_json(dir / "config.json", j);
  const Dataset ds = load_for(rc.train, a.data);
  const SweepResult r = gamma_sweep(ds, a.gammas, rc.train, rc.eval, [&](const std::string& label, const TrainResult& t) {
    save_trained(dir / "checkpoints", label, t);
    out << "trained " << label << std::endl;
  });
  write_file(dir / "sweep.csv", sweep_csv(r));
  out << sweep_csv(r);
  for (const auto& row : r.rows) {
    if (row.diverged) out << "gamma " << row.gamma << " diverged: " << row.error << "\n";
  }
  return kExitOk;
}

// ---- vulnerability ----

struct VulnArgs {
  Common common;
  std::string data, out;
  std::optional<std::string> run_name;
  std::vector<std::string> checkpoints;
  std::vector<std::string> variants;
  std::vector<float> gammas = kVulnerabilityGammas;
};

int vulnerability_cmd(const VulnArgs& a, std::ostream& out) {
  if (a.checkpoints.empty() == a.variants.empty()) {
    throw UsageError("give exactly one of --checkpoints or --variants");
  }
  const RunConfig rc = resolve_config(a.common.config, a.common.train, a.common.eval);
  const fs::path dir = make_run_dir(a.out, "vulnerability", a.run_name);
  auto j = to_json(rc);
  j["gammas"] = a.gammas;
  j["checkpoints"] = a.checkpoints;
  j["variants"] = a.variants;
  write_json(dir / "config.json", j);

  std::vector<TrainingState> states;
  std::vector<std::string> names;
  std::optional<Dataset> ds;
  if (!a.checkpoints.empty()) {
    for (const auto& p : a.checkpoints) {
      states.push_back(load_checkpoint(fs::path(p)));
      names.emplace_back(to_string(states.back().model.variant()));
    }
    ds = load_directory(a.data, states.front().model.spec().input_size);
  } else {
    ds = load_for(rc.train, a.data);
    for (const auto& v : a.variants) {
      TrainConfig cfg = rc.train;
      try {
        cfg.variant = parse_variant(v);
      } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("--variants: ") + e.what());
      }
      TrainResult r = train_model(*ds, cfg);
      save_trained(dir / "checkpoints", std::string(to_string(cfg.variant)), r);
      out << "trained " << to_string(cfg.variant) << std::endl;
      states.push_back(std::move(r.best));
      names.emplace_back(to_string(cfg.variant));
    }
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (names[k] == names[i]) names[i] += "_" + std::to_string(i);
    }
  }
  std::vector<NamedModel> models;
  for (std::size_t i = 0; i < states.size(); ++i) models.push_back({names[i], &states[i].model});
  const VulnerabilityCurve curve = vulnerability(models, ds->train, a.gammas, rc.train.adversarial.scale_adv);
  write_file(dir / "vulnerability.csv", vulnerability_csv(curve));
  std::ostringstream auc;
  auc << "variant,auc\n";
  for (const auto& n : names) auc << n << ',' << std::fixed << std::setprecision(6) << curve_auc(curve, n) << '\n';
  write_file(dir / "auc.csv", auc.str());
  out << vulnerability_csv(curve) << auc.str();
  return kExitOk;
}

// ---- export-attention ----

struct AttentionArgs {
  std::string checkpoint, out;
  std::optional<std::string> run_name;
  std::vector<std::string> images;
  std::optional<double> gamma, scale_adv;
  std::size_t upscale = 16;
};

Tensor load_image(const fs::path& path, std::size_t size) {
  Tensor img = pnm_to_tensor(read_pnm(path));
  if (img.dim(0) == 1) {
    Tensor rgb(Shape{3, img.dim(1), img.dim(2)});
    const std::size_t plane = img.dim(1) * img.dim(2);
    for (std::size_t c = 0; c < 3; ++c) std::copy(img.data().begin(), img.data().end(), rgb.data().begin() + c * plane);
    img = std::move(rgb);
  }
  return resize_nearest(img, size);
}

int export_attention_cmd(const AttentionArgs& a, std::ostream& out) {
  const TrainingState st = load_checkpoint(fs::path(a.checkpoint));
  AdversarialConfig cfg;
  if (a.gamma) cfg.gamma = static_cast<float>(*a.gamma);
  if (a.scale_adv) cfg.scale_adv = static_cast<float>(*a.scale_adv);
  const fs::path dir = make_run_dir(a.out, "attention", a.run_name);
  nlohmann::ordered_json j;
  j["checkpoint"] = a.checkpoint;
  j["images"] = a.images;
  j["gamma"] = cfg.gamma;
  j["scale_adv"] = cfg.scale_adv;
  j["upscale"] = a.upscale;
  write_json(dir / "config.json", j);
  std::vector<Tensor> images;
  std::vector<std::string> stems;
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    images.push_back(load_image(a.images[i], st.model.spec().input_size));
    std::string stem = fs::path(a.images[i]).stem().string();
    for (const auto& s : stems) {
      if (s == stem) stem += "_" + std::to_string(i);
    }
    stems.push_back(stem);
  }
  for (const auto& f : export_attention(st.model, images, stems, dir, cfg, a.upscale)) {
    out << f.delta_csv.string() << "\n" << f.delta_pgm.string() << "\n" << f.adversarial_csv.string() << "\n";
  }
  return kExitOk;
}

// ---- ablation ----

struct AblationArgs {
  Common common;
  std::string data, out;
  std::optional<std::string> run_name;
  std::vector<std::string> variants{"c5_cls", "c5_adv", "c5_c7_cls", "full"};
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

int ablation_cmd(const AblationArgs& a, std::ostream& out) {
  const RunConfig rc = resolve_config(a.common.config, a.common.train, a.common.eval);
  std::vector<Variant> variants;
  for (const auto& v : a.variants) {
    try {
      variants.push_back(parse_variant(v));
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--variants: ") + e.what());
    }
  }
  const fs::path dir = make_run_dir(a.out, "ablation", a.run_name);
  auto j = to_json(rc);
  j["variants"] = a.variants;
  j["seeds"] = a.seeds;
  write_json(dir / "config.json", j);
  const Dataset ds = load_for(rc.train, a.data);
  const AblationResult r =
      ablation_report(ds, variants, a.seeds, rc.train, rc.eval, [&](const std::string& label, const TrainResult& t) {
        save_trained(dir / "checkpoints", label, t);
        out << "trained " << label << std::endl;
      });
  write_file(dir / "ablation.csv", ablation_csv(r));
  write_file(dir / "runs.csv", ablation_runs_csv(r));
  out << ablation_csv(r);
  for (const auto& run : r.runs) {
    if (!run.ok) out << to_string(run.variant) << " seed " << run.seed << " failed: " << run.error << "\n";
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"advfeat: few-shot classification with adversarial feature learning"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  GenSynthArgs gs;
  auto* c_gen = app.add_subcommand("gen-synth", "Generate the procedural shape dataset");
  c_gen->add_option("--out", gs.out, "output directory")->required();
  c_gen->add_option("--train-classes", gs.spec.n_train, "training classes");
  c_gen->add_option("--val-classes", gs.spec.n_val, "validation classes");
  c_gen->add_option("--test-classes", gs.spec.n_test, "test classes");
  c_gen->add_option("--images-per-class", gs.spec.images_per_class, "images per class");
  c_gen->add_option("--image-size", gs.spec.image_size, "image side in pixels");
  c_gen->add_option("--seed", gs.spec.seed, "generator seed");

  TrainArgs ta;
  auto* c_train = app.add_subcommand("train", "Train a model and save checkpoints plus the epoch log");
  add_train_options(c_train, ta.common);
  c_train->add_option("--data", ta.data, "dataset directory")->required();
  c_train->add_option("--out", ta.out, "output directory")->required();

  EvalArgs ea;
  auto* c_eval = app.add_subcommand("eval", "Episodic nearest-prototype evaluation of a checkpoint");
  c_eval->add_option("--config", ea.common.config, "JSON config file (its eval section is used)");
  c_eval->add_option("--preset", ea.common.train.preset, "expected checkpoint preset");
  add_eval_options(c_eval, ea.common);
  c_eval->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->required();
  c_eval->add_option("--data", ea.data, "dataset directory")->required();
  c_eval->add_option("--report", ea.report, "write the CSV report here instead of stdout");

  SweepArgs sa;
  auto* c_sweep = app.add_subcommand("sweep", "Train one model per mask step size and evaluate each");
  add_train_options(c_sweep, sa.common);
  add_eval_options(c_sweep, sa.common);
  c_sweep->add_option("--data", sa.data, "dataset directory")->required();
  c_sweep->add_option("--out", sa.out, "base output directory")->required();
  c_sweep->add_option("--run-name", sa.run_name, "run directory name (default: timestamp)");
  c_sweep->add_option("--gammas", sa.gammas, "comma-separated step sizes")->delimiter(',');

  VulnArgs va;
  auto* c_vuln = app.add_subcommand("vulnerability", "Train-split accuracy under growing feature perturbations");
  add_train_options(c_vuln, va.common);
  c_vuln->add_option("--data", va.data, "dataset directory")->required();
  c_vuln->add_option("--out", va.out, "base output directory")->required();
  c_vuln->add_option("--run-name", va.run_name, "run directory name (default: timestamp)");
  c_vuln->add_option("--checkpoints", va.checkpoints, "comma-separated checkpoints")->delimiter(',');
  c_vuln->add_option("--variants", va.variants, "comma-separated variants to train")->delimiter(',');
  c_vuln->add_option("--gammas", va.gammas, "perturbation grid starting at 0")->delimiter(',');

  AttentionArgs aa;
  auto* c_att = app.add_subcommand("export-attention", "Write mask-gradient heatmaps for images");
  c_att->add_option("--checkpoint", aa.checkpoint, "checkpoint file")->required();
  c_att->add_option("--images", aa.images, "comma-separated PPM/PGM files")->delimiter(',')->required();
  c_att->add_option("--out", aa.out, "base output directory")->required();
  c_att->add_option("--run-name", aa.run_name, "run directory name (default: timestamp)");
  c_att->add_option("--gamma", aa.gamma, "mask step size for M_a");
  c_att->add_option("--scale-adv", aa.scale_adv, "cosine scale for the entropy");
  c_att->add_option("--upscale", aa.upscale, "pixels per mask cell in the PGM")->check(CLI::PositiveNumber);

  AblationArgs ab;
  auto* c_abl = app.add_subcommand("ablation", "Train every variant for every seed and tabulate accuracy");
  add_train_options(c_abl, ab.common);
  add_eval_options(c_abl, ab.common);
  c_abl->add_option("--data", ab.data, "dataset directory")->required();
  c_abl->add_option("--out", ab.out, "base output directory")->required();
  c_abl->add_option("--run-name", ab.run_name, "run directory name (default: timestamp)");
  c_abl->add_option("--variants", ab.variants, "comma-separated variants")->delimiter(',');
  c_abl->add_option("--seeds", ab.seeds, "comma-separated seeds")->delimiter(',');

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (c_gen->parsed()) return gen_synth(gs, out);
    if (c_train->parsed()) return train(ta, out);
    if (c_eval->parsed()) return eval(ea, out);
    if (c_sweep->parsed()) return sweep(sa, out);
    if (c_vuln->parsed()) return vulnerability_cmd(va, out);
    if (c_att->parsed()) return export_attention_cmd(aa, out);
    if (c_abl->parsed()) return ablation_cmd(ab, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numerical divergence: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace advfeat::cli
