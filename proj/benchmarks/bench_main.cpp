// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "semmix/attention.hpp"
#include "semmix/checkpoint.hpp"
#include "semmix/mix.hpp"
#include "semmix/oracle.hpp"
#include "semmix/sampler.hpp"
#include "semmix/shapes.hpp"
#include "semmix/trainer.hpp"

namespace semmix {
namespace {

const std::vector<std::string> kConcepts{"circle", "square", "triangle", "cross", "star",
                                         "solid", "striped", "dotted"};

UNetDenoiser default_model() {
  UNetConfig cfg;
  cfg.vocab_size = static_cast<int>(Vocabulary(kConcepts).size());
  UNet<float> net(cfg);
  net.init(1);
  return UNetDenoiser(cfg, NoiseSchedule(1000, ScheduleFamily::kCosine), Vocabulary(kConcepts),
                      export_weights(net));
}

void BM_ScheduleBuild(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(NoiseSchedule(1000, ScheduleFamily::kCosine));
}
BENCHMARK(BM_ScheduleBuild);

void BM_OracleEps(benchmark::State& state) {
  const NoiseSchedule sched(1000, ScheduleFamily::kCosine);
  Rng rng = make_rng(1);
  const int dim = static_cast<int>(state.range(0));
  const MixtureWorld w = random_world(dim, rng);
  const Prompt p = parse_prompt("a", w.vocabulary());
  std::vector<double> x(static_cast<std::size_t>(dim), 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(oracle_eps(w, sched, x, 500, p));
}
BENCHMARK(BM_OracleEps)->Arg(2)->Arg(8);

void BM_UNetForward(benchmark::State& state) {
  const UNetDenoiser model = default_model();
  auto rngs = make_rngs(2, static_cast<std::size_t>(state.range(0)));
  const SampleBatch x = normal_batch(model.sample_shape(), rngs);
  const Prompt p = parse_prompt("star striped", model.vocabulary());
  for (auto _ : state) benchmark::DoNotOptimize(model.predict_eps(x, 500, p));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_UNetForward)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ReweightAttention(benchmark::State& state) {
  CrossAttentionState s;
  s.maps = Eigen::MatrixXd::Constant(256, 4, 0.25);
  const std::vector<double> scales{1.0, 1.0, -1.0, 1.0};
  for (auto _ : state) benchmark::DoNotOptimize(reweight_attention(s, scales));
}
BENCHMARK(BM_ReweightAttention);

void BM_OracleMix(benchmark::State& state) {
  const NoiseSchedule sched(1000, ScheduleFamily::kCosine);
  const OracleDenoiser model(two_class_world(2), sched);
  const SampleBatch x0(SampleShape::flat(2), 64, std::vector<double>(128, -2.0));
  const Prompt b = parse_prompt("b", model.vocabulary());
  for (auto _ : state) {
    auto rngs = make_rngs(3, 64);
    benchmark::DoNotOptimize(mix_image_text(model, x0, b, MixConfig{}, rngs));
  }
}
BENCHMARK(BM_OracleMix)->Unit(benchmark::kMillisecond);

void BM_ImageMix(benchmark::State& state) {
  const UNetDenoiser model = default_model();
  ShapesSpec spec;
  spec.count_per_class = 1;
  const ShapesDataset data = generate_shapes(spec);
  const SampleBatch x0 = data.images.slice(0, 1);
  const Prompt p = parse_prompt("striped", model.vocabulary());
  for (auto _ : state) {
    auto rngs = make_rngs(4, 1);
    benchmark::DoNotOptimize(mix_image_text(model, x0, p, MixConfig{}, rngs));
  }
}
BENCHMARK(BM_ImageMix)->Unit(benchmark::kMillisecond);

void BM_TrainSteps(benchmark::State& state) {
  ShapesSpec spec;
  spec.count_per_class = 4;
  const ShapesDataset data = generate_shapes(spec);
  const TrainingData td{&data.images, &data.prompts, &data.vocabulary, "bench"};
  TrainConfig cfg;
  cfg.steps = 2;
  cfg.batch_size = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(train(td, cfg));
  state.SetItemsProcessed(state.iterations() * cfg.steps);
}
BENCHMARK(BM_TrainSteps)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace semmix

BENCHMARK_MAIN();
