// Microbenchmarks for the hot paths: STFT analysis/synthesis, the tiny
// model's forward pass, one full training step (forward + backward), the
// sub-sampler, and the evaluation metrics. Run with --benchmark_filter=...
// to select a subset.

#include <benchmark/benchmark.h>

#include <vector>

#include "ont/metrics.hpp"
#include "ont/model.hpp"
#include "ont/network.hpp"
#include "ont/rng.hpp"
#include "ont/stft.hpp"
#include "ont/subsample.hpp"
#include "ont/synth.hpp"
#include "ont/training.hpp"
#include "ont/waveform.hpp"

namespace {

using namespace ont;

Waveform noisy_clip(double seconds, int rate, std::uint64_t seed) {
  SynthSpec spec;
  spec.duration_s = seconds;
  spec.seed = seed;
  const Waveform clean = synth_clean(spec, rate);
  return overlay_noise(clean, synth_white_noise(clean.size(), mix_seed(seed, 1), rate), 5.0);
}

StftConfig stft_at(int rate) {
  StftConfig cfg;
  cfg.sample_rate_hz = rate;
  cfg.validate();
  return cfg;
}

void BM_StftAnalysis(benchmark::State& state) {
  const Waveform x = noisy_clip(1.0, 16000, 11);
  const StftConfig cfg = stft_at(16000);
  for (auto _ : state) benchmark::DoNotOptimize(stft(x, cfg));
}
BENCHMARK(BM_StftAnalysis);

void BM_StftRoundTrip(benchmark::State& state) {
  const Waveform x = noisy_clip(1.0, 16000, 12);
  const StftConfig cfg = stft_at(16000);
  for (auto _ : state) benchmark::DoNotOptimize(istft(stft(x, cfg), cfg));
}
BENCHMARK(BM_StftRoundTrip);

void BM_SubsamplePair(benchmark::State& state) {
  const Waveform x = noisy_clip(1.0, 16000, 13);
  SubsampleConfig cfg;
  cfg.seed = 99;
  for (auto _ : state) benchmark::DoNotOptimize(subsample_pair(x, cfg));
}
BENCHMARK(BM_SubsamplePair);

void BM_TinyForward(benchmark::State& state) {
  DenoiserModel model(ModelConfig::tiny());
  model.init_params(7);
  const Waveform x = noisy_clip(1.1, 4000, 14);
  const StftConfig cfg = stft_at(4000);
  for (auto _ : state) benchmark::DoNotOptimize(denoise_waveform(model, x, cfg));
}
BENCHMARK(BM_TinyForward)->Unit(benchmark::kMillisecond);

void BM_TinyTrainStep(benchmark::State& state) {
  DenoiserModel model(ModelConfig::tiny());
  model.init_params(7);
  const Waveform x = noisy_clip(1.1, 4000, 15);
  const StftConfig cfg = stft_at(4000);
  TrainConfig tc;
  std::vector<std::vector<double>> grads;
  for (const auto& p : model.params()) grads.emplace_back(p.numel(), 0.0);
  std::uint64_t pair_seed = 0;
  for (auto _ : state) {
    for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
    benchmark::DoNotOptimize(ont_step_grads<float>(model, x, tc, cfg, ++pair_seed, grads));
  }
}
BENCHMARK(BM_TinyTrainStep)->Unit(benchmark::kMillisecond);

void BM_Snr(benchmark::State& state) {
  const Waveform x = noisy_clip(1.0, 16000, 16);
  SynthSpec spec;
  spec.duration_s = 1.0;
  spec.seed = 16;
  const Waveform clean = synth_clean(spec, 16000);
  for (auto _ : state) benchmark::DoNotOptimize(snr_db(clean, x));
}
BENCHMARK(BM_Snr);

void BM_Stoi(benchmark::State& state) {
  SynthSpec spec;
  spec.duration_s = 2.0;
  spec.seed = 17;
  const Waveform clean = synth_clean(spec, 16000);
  const Waveform x =
      overlay_noise(clean, synth_white_noise(clean.size(), 170, 16000), 5.0);
  for (auto _ : state) benchmark::DoNotOptimize(stoi(clean, x));
}
BENCHMARK(BM_Stoi)->Unit(benchmark::kMillisecond);

void BM_Resample16kTo10k(benchmark::State& state) {
  const Waveform x = noisy_clip(1.0, 16000, 18);
  for (auto _ : state) benchmark::DoNotOptimize(polyphase_resample(x, 10000));
}
BENCHMARK(BM_Resample16kTo10k);

}  // namespace

BENCHMARK_MAIN();
