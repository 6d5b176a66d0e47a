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

#include "advfeat/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace advfeat {

namespace {

constexpr std::string_view kFirstPrefix = "m/";
constexpr std::string_view kSecondPrefix = "v/";

struct Contents {
  Preset preset;
  Variant variant;
  std::uint32_t epoch;
  std::uint64_t steps;
  std::vector<TensorRecord> tensors;
  OptimizerKind optimizer;
  std::vector<TensorRecord> moments;
};

Contents read_contents(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  const std::uint32_t version = io::read_u32(in);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Contents c{};
  try {
    c.preset = parse_preset(io::read_string(in));
    c.variant = parse_variant(io::read_string(in));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  c.epoch = io::read_u32(in);
  c.steps = io::read_u64(in);
  const std::uint32_t n = io::read_u32(in);
  for (std::uint32_t i = 0; i < n; ++i) c.tensors.push_back(read_tensor_record(in));
  try {
    c.optimizer = parse_optimizer(io::read_string(in));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint optimizer: ") + e.what());
  }
  const std::uint32_t m = io::read_u32(in);
  for (std::uint32_t i = 0; i < m; ++i) c.moments.push_back(read_tensor_record(in));
  return c;
}

void apply(TrainingState& state, Contents&& c) {
  if (c.preset != state.model.preset() || c.variant != state.model.variant()) {
    throw ShapeError("checkpoint is " + std::string(to_string(c.preset)) + "/" + std::string(to_string(c.variant)) +
                     ", model is " + std::string(to_string(state.model.preset())) + "/" +
                     std::string(to_string(state.model.variant())));
  }
  auto targets = state.model.parameters();
  const std::size_t n_params = targets.size();
  for (auto& b : state.model.buffers()) targets.push_back(b);
  if (targets.size() != c.tensors.size()) {
    throw ShapeError("checkpoint has " + std::to_string(c.tensors.size()) + " tensors, model expects " +
                     std::to_string(targets.size()));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (c.tensors[i].name != targets[i].name) {
      throw ShapeError("checkpoint tensor '" + c.tensors[i].name + "' where '" + targets[i].name + "' expected");
    }
    if (c.tensors[i].tensor.shape() != targets[i].tensor->shape()) {
      throw ShapeError("checkpoint tensor '" + c.tensors[i].name + "' has shape " +
                       c.tensors[i].tensor.shape().to_string() + ", model expects " +
                       targets[i].tensor->shape().to_string());
    }
  }
  std::vector<Tensor> first, second;
  for (auto& rec : c.moments) {
    const std::string_view name = rec.name;
    std::vector<Tensor>* dst = nullptr;
    if (name.starts_with(kFirstPrefix)) dst = &first;
    if (name.starts_with(kSecondPrefix)) dst = &second;
    if (!dst) throw FormatError("unexpected optimizer record '" + rec.name + "'");
    const std::size_t idx = dst->size();
    if (idx >= n_params || name.substr(2) != targets[idx].name || rec.tensor.shape() != targets[idx].tensor->shape()) {
      throw ShapeError("optimizer record '" + rec.name + "' does not match the model parameters");
    }
    dst->push_back(std::move(rec.tensor));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) *targets[i].tensor = std::move(c.tensors[i].tensor);
  OptimizerConfig oc = state.optimizer.config();
  oc.kind = c.optimizer;
  state.optimizer = Optimizer(oc);
  state.optimizer.first_moments() = std::move(first);
  state.optimizer.second_moments() = std::move(second);
  state.optimizer.set_steps(c.steps);
  state.epoch = c.epoch;
}

}  // namespace

void save_checkpoint(const TrainingState& state, std::ostream& out) {
  out.write(kCheckpointMagic, 4);
  io::write_u32(out, kCheckpointVersion);
  io::write_string(out, to_string(state.model.preset()));
  io::write_string(out, to_string(state.model.variant()));
  io::write_u32(out, state.epoch);
  io::write_u64(out, state.optimizer.steps());
  const auto params = state.model.parameters();
  const auto buffers = state.model.buffers();
  io::write_u32(out, static_cast<std::uint32_t>(params.size() + buffers.size()));
  for (const auto& p : params) write_tensor_record(out, p.name, *p.tensor);
  for (const auto& b : buffers) write_tensor_record(out, b.name, *b.tensor);
  io::write_string(out, to_string(state.optimizer.config().kind));
  const auto& first = state.optimizer.first_moments();
  const auto& second = state.optimizer.second_moments();
  io::write_u32(out, static_cast<std::uint32_t>(first.size() + second.size()));
  for (std::size_t i = 0; i < first.size(); ++i) {
    write_tensor_record(out, std::string(kFirstPrefix) + params[i].name, first[i]);
  }
  for (std::size_t i = 0; i < second.size(); ++i) {
    write_tensor_record(out, std::string(kSecondPrefix) + params[i].name, second[i]);
  }
  if (!out) throw std::runtime_error("checkpoint write failed");
}

void save_checkpoint(const TrainingState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  save_checkpoint(state, out);
}

TrainingState load_checkpoint(std::istream& in) {
  Contents c = read_contents(in);
  std::size_t n_classes = 0;
  for (const auto& rec : c.tensors) {
    if (rec.name == "classifier.weights" && rec.tensor.rank() == 2) n_classes = rec.tensor.dim(0);
  }
  if (n_classes == 0) throw FormatError("checkpoint has no classifier weights");
  TrainingState state{Model(c.preset, c.variant, n_classes, 0), Optimizer(), 0};
  apply(state, std::move(c));
  return state;
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  return load_checkpoint(in);
}

void load_checkpoint_into(TrainingState& state, std::istream& in) { apply(state, read_contents(in)); }

void load_checkpoint_into(TrainingState& state, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  load_checkpoint_into(state, in);
}

}  // namespace advfeat
