// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "drum/adapter.hpp"
#include "drum/coreset.hpp"
#include "drum/guidance.hpp"
#include "drum/rng.hpp"
#include "drum/synthetic.hpp"
#include "drum/trainer.hpp"

namespace {

using namespace drum;

Matrix gaussian(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

void BM_CoresetSelect(benchmark::State& state) {
  const auto n_records = static_cast<Index>(state.range(0));
  Rng rng(1);
  const Matrix e = gaussian(n_records, 768, rng);
  std::vector<double> prefs(static_cast<std::size_t>(n_records));
  for (auto& p : prefs) p = 0.2 * static_cast<double>(1 + rng.uniform_index(5));
  const CoresetConfig cfg{sample_count(0.1, n_records), n_records, 7, true};
  for (auto _ : state) benchmark::DoNotOptimize(coreset_select(e, prefs, cfg));
  state.SetComplexityN(n_records);
}
BENCHMARK(BM_CoresetSelect)->RangeMultiplier(2)->Range(64, 1024)->Complexity();

void BM_GuidedWeights(benchmark::State& state) {
  const auto refs = static_cast<Index>(state.range(0));
  std::vector<Segment> segs;
  for (Index g = 0; g < refs; ++g) segs.push_back({SegmentRole::reference, 1.0 + static_cast<double>(g % 5), 77});
  segs.push_back({SegmentRole::target, 1.0, 77});
  const SegmentLayout layout(segs);
  Rng rng(2);
  const Matrix scores = gaussian(77, layout.total_tokens(), rng);
  for (auto _ : state) benchmark::DoNotOptimize(guided_weights(layout, scores, {0.3, true}));
}
BENCHMARK(BM_GuidedWeights)->Arg(1)->Arg(4)->Arg(16);

void BM_FusedWeights(benchmark::State& state) {
  Rng rng(3);
  const Matrix scores = gaussian(77, 77 * (state.range(0) + 1), rng);
  for (auto _ : state) benchmark::DoNotOptimize(fused_weights(scores));
}
BENCHMARK(BM_FusedWeights)->Arg(1)->Arg(4)->Arg(16);

PersonalizationRequest toy_request(Index d_cond, Index refs, Index tokens) {
  SyntheticSpec spec;
  spec.n_users = 1;
  spec.history_len = refs;
  spec.d_sim = d_cond;
  spec.d_cond = d_cond;
  spec.max_tokens = tokens;
  const auto corpus = gen_synthetic(spec);
  PersonalizationRequest req;
  req.target = corpus.records.back();
  req.references.assign(corpus.records.begin(), corpus.records.end() - 1);
  req.uncond = corpus.uncond;
  return req;
}

void BM_AdapterForward(benchmark::State& state) {
  AdapterConfig arch;
  arch.d_cond = 64;
  arch.d_model = 64;
  arch.n_heads = 4;
  arch.n_layers = 4;
  const auto params = AdapterParams::initialize(arch, 1);
  const auto req = toy_request(64, state.range(0), 16);
  for (auto _ : state) benchmark::DoNotOptimize(forward(params, req));
}
BENCHMARK(BM_AdapterForward)->Arg(1)->Arg(4)->Arg(16);

void BM_TrainStep(benchmark::State& state) {
  AdapterConfig arch;
  arch.d_cond = 64;
  arch.d_model = 64;
  arch.n_heads = 4;
  arch.n_layers = 4;
  const auto params = AdapterParams::initialize(arch, 1);
  SyntheticSpec spec;
  spec.history_len = 15;
  const auto corpus = gen_synthetic(spec);
  std::vector<TrainingExample> batch;
  for (Index i = 0; i < 16; ++i) {
    batch.push_back(reconstruction_example(corpus.records[static_cast<std::size_t>(i)], corpus.uncond));
  }
  AdapterParams grads(arch);
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(batch_loss_and_grad(params, batch, grads, threads));
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
