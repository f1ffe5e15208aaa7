// Copyright 2026 The hiltta Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <benchmark/benchmark.h>

#include "hiltta/engine.hpp"
#include "hiltta/harness.hpp"
#include "hiltta/kmargin.hpp"

using namespace hiltta;

namespace
{
ModelParams random_params(int d, int h, int c, Rng& rng)
{
    ModelParams p = ModelParams::zeros(d, h, c);
    for (auto& b : p.blocks())
        for (double& v : b.values) v = 0.5 * rng.normal();
    return p;
}

Matrix random_inputs(std::size_t n, int d, Rng& rng)
{
    Matrix m(n, static_cast<std::size_t>(d));
    for (double& v : m.data) v = rng.normal();
    return m;
}

void BM_KCenterGreedy(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto k = static_cast<std::size_t>(state.range(1));
    Rng rng(1);
    std::vector<WeightedEmbedding> pts;
    for (std::size_t i = 0; i < n; ++i)
    {
        WeightedEmbedding e{static_cast<SampleId>(i), FeatureVector(32), 1.0};
        for (double& v : e.g) v = rng.normal();
        pts.push_back(std::move(e));
    }
    for (auto _ : state) benchmark::DoNotOptimize(kcenter_greedy(pts, k));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_KCenterGreedy)->Args({200, 6})->Args({200, 20})->Args({1000, 30});

void BM_Forward(benchmark::State& state)
{
    Rng rng(2);
    const ModelParams p = random_params(16, 32, 5, rng);
    const Matrix x = random_inputs(static_cast<std::size_t>(state.range(0)), 16, rng);
    for (auto _ : state) benchmark::DoNotOptimize(forward(p, x));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(200)->Arg(1000);

void BM_EntropyGradient(benchmark::State& state)
{
    Rng rng(3);
    const ModelParams p = random_params(16, 32, 5, rng);
    const Matrix x = random_inputs(200, 16, rng);
    const auto mask = state.range(0) ? ParamMask::NormalizationOnly : ParamMask::All;
    for (auto _ : state) benchmark::DoNotOptimize(entropy_loss_grad(p, x, mask));
}
BENCHMARK(BM_EntropyGradient)->Arg(0)->Arg(1);

void BM_StepBatch(benchmark::State& state)
{
    RunConfig c;
    c.stream.num_domains = 1;
    c.stream.batches_per_domain = 4;
    c.engine.threads = static_cast<int>(state.range(0));
    const Workspace ws = build_workspace(c);
    const EngineConfig e = make_engine_config(c);
    OracleLabeler oracle(ws.stream.truth);
    for (auto _ : state)
    {
        state.PauseTiming();
        EngineState s = EngineState::init(ws.model, e);
        state.ResumeTiming();
        for (const Batch& b : ws.stream.batches) benchmark::DoNotOptimize(step_batch(s, e, b, oracle));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ws.stream.batches.size()));
}
BENCHMARK(BM_StepBatch)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
