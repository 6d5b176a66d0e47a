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

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "advfeat/adversarial.hpp"
#include "advfeat/nn.hpp"
#include "advfeat/parallel.hpp"
#include "advfeat/random.hpp"
#include "advfeat/training.hpp"

namespace {

using namespace advfeat;

Tensor random_tensor(const Shape& s, std::uint64_t seed) {
  Tensor t(s);
  Rng rng = make_stream(seed, "bench");
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (float& v : t.data()) v = n(rng);
  return t;
}

// args: batch, in channels, out channels, spatial
void BM_ConvForward(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0)), ci = static_cast<std::size_t>(state.range(1)),
             co = static_cast<std::size_t>(state.range(2)), s = static_cast<std::size_t>(state.range(3));
  ConvLayer<float> layer{random_tensor(Shape{co, ci, 3, 3}, 1), Tensor(Shape{co}), 1, 1};
  const Tensor x = random_tensor(Shape{b, ci, s, s}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, layer));
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * static_cast<double>(b * co * ci * 9 * s * s),
                                                  benchmark::Counter::kIsIterationInvariantRate,
                                                  benchmark::Counter::kIs1000);
}

void BM_ConvBackward(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0)), ci = static_cast<std::size_t>(state.range(1)),
             co = static_cast<std::size_t>(state.range(2)), s = static_cast<std::size_t>(state.range(3));
  ConvLayer<float> layer{random_tensor(Shape{co, ci, 3, 3}, 1), Tensor(Shape{co}), 1, 1};
  const Tensor x = random_tensor(Shape{b, ci, s, s}, 2);
  const Tensor dy = random_tensor(Shape{b, co, s, s}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(dy, x, layer));
  state.counters["GFLOP/s"] = benchmark::Counter(4.0 * static_cast<double>(b * co * ci * 9 * s * s),
                                                  benchmark::Counter::kIsIterationInvariantRate,
                                                  benchmark::Counter::kIs1000);
}

void BM_BatchNormTrain(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), s = static_cast<std::size_t>(state.range(1));
  auto layer = BatchNormLayer<float>::make(c);
  const Tensor x = random_tensor(Shape{32, c, s, s}, 7);
  const Tensor dy = random_tensor(Shape{32, c, s, s}, 8);
  for (auto _ : state) {
    BatchNormCache<float> cache;
    const Tensor y = batchnorm_forward(x, layer, Mode::train, &cache);
    benchmark::DoNotOptimize(batchnorm_backward(dy, cache, layer));
  }
}

void BM_LeakyPool(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), s = static_cast<std::size_t>(state.range(1));
  const Tensor x = random_tensor(Shape{32, c, s, s}, 9);
  for (auto _ : state) {
    const Tensor a = leaky_relu(x);
    const Tensor da = leaky_relu_backward(x, a);
    const auto p = maxpool2x2(da);
    benchmark::DoNotOptimize(maxpool2x2_backward(p.output, p.indices));
  }
}

void BM_MaskGradient(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), s = static_cast<std::size_t>(state.range(1));
  CosineClassifier clf{random_tensor(Shape{64, c}, 4)};
  const Tensor maps = random_tensor(Shape{c, s, s}, 5);
  const AdversarialConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(compute_mask_gradient(maps, clf, cfg));
}

void BM_TrainingStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.variant = static_cast<Variant>(state.range(0));
  TrainingState st = make_training_state(cfg, 8);
  Trainer trainer(st, cfg);
  const Tensor images = random_tensor(Shape{32, 3, 64, 64}, 6);
  std::vector<std::size_t> labels(32);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 8;
  for (auto _ : state) benchmark::DoNotOptimize(trainer.training_step(images, labels));
}

BENCHMARK(BM_ConvForward)->Args({32, 3, 32, 64})->Args({32, 32, 32, 64})->Args({32, 32, 32, 32})->Args({32, 64, 64, 16})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward)->Args({32, 3, 32, 64})->Args({32, 32, 32, 64})->Args({32, 32, 32, 32})->Args({32, 64, 64, 16})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchNormTrain)->Args({32, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LeakyPool)->Args({32, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaskGradient)->Args({64, 4})->Args({512, 8});
BENCHMARK(BM_TrainingStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  advfeat::retain_heap_memory();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
