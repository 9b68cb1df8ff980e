// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "unfoldsep/dataset.hpp"
#include "unfoldsep/dsp.hpp"
#include "unfoldsep/losses.hpp"
#include "unfoldsep/masks.hpp"
#include "unfoldsep/phase_recon.hpp"
#include "unfoldsep/separator.hpp"

namespace {

using namespace unfoldsep;

Waveform noise(std::size_t n) {
  std::mt19937_64 rng(n);
  std::normal_distribution<double> nd;
  Waveform w;
  w.samples.resize(n);
  for (double& v : w.samples) v = nd(rng);
  return w;
}

void BM_Stft(benchmark::State& state) {
  const Waveform x = noise(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(stft(x, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Stft)->Arg(8000)->Arg(32000);

void BM_Istft(benchmark::State& state) {
  const auto spec = stft(noise(static_cast<std::size_t>(state.range(0))), {});
  for (auto _ : state) benchmark::DoNotOptimize(istft(spec));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Istft)->Arg(8000)->Arg(32000);

void BM_Misi(benchmark::State& state) {
  const auto b = gen_mixture("bench", 1);
  const auto x = stft(b.mixture, {});
  std::vector<RealMatrix> mags;
  for (const auto& s : b.sources) mags.push_back(magnitude(stft(s, {})));
  const RealMatrix ph = phase(x);
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(misi(b.mixture, mags, ph, {}, k));
}
BENCHMARK(BM_Misi)->Arg(0)->Arg(5)->Unit(benchmark::kMillisecond);

// Forward and backward of one training objective on a 100-frame segment.
void BM_StageObjective(benchmark::State& state) {
  const Stage stage = state.range(0) < 0 ? Stage{Objective::kChimera, 0}
                                         : Stage{state.range(0) == 0 ? Objective::kWa : Objective::kWaMisi,
                                                 static_cast<int>(state.range(0))};
  const auto data = gen_dataset(1, 2);
  const auto segs = make_segments(data, {}, 100);
  MaskerNet net = MaskerNet::initialize(NetConfig{}, 3);
  std::vector<ComplexSpectrogram> specs{stft(segs[0].mixture, {})};
  net.fit_normalizer(specs);
  const TrainConfig config;
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var loss = stage_objective(tape, net, stage, segs[0], config);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
  state.SetLabel(stage.name());
}
BENCHMARK(BM_StageObjective)->Arg(-1)->Arg(0)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
