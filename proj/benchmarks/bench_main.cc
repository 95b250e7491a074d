#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "specdetect/datasets.h"
#include "specdetect/dsp.h"
#include "specdetect/metrics.h"
#include "specdetect/model.h"
#include "specdetect/training.h"

namespace {

using namespace specdetect;

audio::AudioBuffer utterance() { return data::generate_toy_pair(3, 0)[0].audio; }

void BM_MelSpectrogram(benchmark::State& state) {
  const auto buf = audio::fit_to_duration(utterance(), audio::kInputSeconds);
  for (auto _ : state) benchmark::DoNotOptimize(dsp::mel_spectrogram(buf));
}
BENCHMARK(BM_MelSpectrogram)->Unit(benchmark::kMillisecond);

void BM_ExtractFeatures(benchmark::State& state) {
  const auto buf = utterance();
  for (auto _ : state) benchmark::DoNotOptimize(dsp::extract_features(buf));
}
BENCHMARK(BM_ExtractFeatures)->Unit(benchmark::kMillisecond);

template <typename T>
void BM_Forward(benchmark::State& state) {
  const auto cfg = model::ModelConfig::toy();
  const auto params = model::init_parameters<T>(cfg);
  const auto patches = model::patchify<T>(dsp::extract_features(utterance()), cfg.patch_h, cfg.patch_w);
  for (auto _ : state) {
    nn::Graph<T> g;
    model::BoundParams<T> b(g, params, nullptr);
    benchmark::DoNotOptimize(g.value(model::forward(g, patches, b, cfg))[0]);
  }
}
BENCHMARK(BM_Forward<float>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Forward<double>)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const auto cfg = model::ModelConfig::toy();
  const auto params = model::init_parameters<float>(cfg);
  auto grads = params;
  const auto patches = model::patchify<float>(dsp::extract_features(utterance()), cfg.patch_h, cfg.patch_w);
  const auto target = training::one_hot<float>(model::Label::kBonaFide);
  for (auto _ : state) {
    nn::Graph<float> g;
    model::BoundParams<float> b(g, params, &grads);
    const nn::Var loss = g.binary_cross_entropy(model::forward(g, patches, b, cfg), target, 1e-12f);
    g.backward(loss);
    benchmark::DoNotOptimize(g.value(loss)[0]);
  }
}
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMillisecond);

void BM_Eer(benchmark::State& state) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> d;
  metrics::ScoreSet s;
  for (int64_t i = 0; i < state.range(0); ++i) {
    s.bona.push_back(d(gen) + 1.0);
    s.spoof.push_back(d(gen));
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::eer(s).eer);
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Eer)->RangeMultiplier(10)->Range(100, 100000)->Complexity(benchmark::oNLogN);

}  // namespace

BENCHMARK_MAIN();
