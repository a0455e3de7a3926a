// Copyright 2026 The scalesep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include "scalesep/datagen.hpp"
#include "scalesep/dsp.hpp"
#include "scalesep/model.hpp"
#include "scalesep/objectives.hpp"

namespace {

using namespace scalesep;

MixtureExample clip(Real seconds) {
  MixtureParams p;
  p.duration = seconds;
  return synth_mixture(3, p);
}

void BM_StftRoundTrip(benchmark::State& state) {
  StftConfig c;
  c.window_size = static_cast<int>(state.range(0));
  c.hop = c.window_size / 2;
  const MixtureExample ex = clip(1.0);
  for (auto _ : state) {
    const Waveform y = istft(stft(ex.mixture, c), c, ex.mixture.length());
    benchmark::DoNotOptimize(y.samples.data());
  }
  state.SetItemsProcessed(state.iterations() * ex.mixture.length());
}
BENCHMARK(BM_StftRoundTrip)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

// Inference cost against the Reconstructor depth used at run time.
void BM_ForwardByDepth(benchmark::State& state) {
  const ModelParams params = init_model(ModelConfig::tiny(), 1);
  const MixtureExample ex = clip(1.0);
  const int n_re = static_cast<int>(state.range(0));
  for (auto _ : state) {
    const SeparationOutput out = forward(params, ex.mixture, 2, n_re, false);
    benchmark::DoNotOptimize(out.waves.data());
  }
  state.counters["rtf"] = benchmark::Counter(
      static_cast<double>(state.iterations()), benchmark::Counter::kIsRate |
                                                   benchmark::Counter::kInvert);
}
BENCHMARK(BM_ForwardByDepth)->DenseRange(1, 8)->Unit(benchmark::kMillisecond);

// One forward and backward pass of the training objective.
void BM_TrainStep(benchmark::State& state) {
  ModelParams params = init_model(ModelConfig::tiny(), 1);
  const MixtureExample ex = clip(0.25);
  const Tensor refs = ex.source_tensor();
  const LossConfig loss = LossConfig::from_label("l1+3");
  for (auto _ : state) {
    params.zero_grad();
    const ForwardTrace trace = forward_trace(params, ex.mixture, {2, 3}, loss.request());
    backward(trace_loss(trace, refs, loss).total);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_PitAssign(benchmark::State& state) {
  const int j = static_cast<int>(state.range(0));
  MixtureParams p;
  p.speakers = j;
  p.duration = 0.5;
  const MixtureExample ex = synth_mixture(4, p);
  std::vector<Waveform> est(ex.sources.rbegin(), ex.sources.rend());
  for (auto _ : state) benchmark::DoNotOptimize(pit_assign(est, ex.sources).mean_si_snr);
}
BENCHMARK(BM_PitAssign)->DenseRange(2, 4)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
