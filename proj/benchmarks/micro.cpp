// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "spimag/diff/ops.hpp"
#include "spimag/plan/atc.hpp"
#include "spimag/plan/cem.hpp"
#include "spimag/plan/masks.hpp"
#include "spimag/plan/mpc.hpp"
#include "spimag/wm/world_model.hpp"

namespace {

using namespace spimag;
using diff::Tensor;

Tensor gaussian(std::mt19937_64& rng, std::size_t r, std::size_t c, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor t({r, c});
  for (double& v : t.values()) v = n(rng);
  return t;
}

// Batched rollout of 100 plans, H = 5, on an 8x8 token grid.
void BM_RolloutBatch(benchmark::State& state) {
  const double p = static_cast<double>(state.range(0)) / 100.0;
  wm::ModelConfig c;
  c.grid_h = 8;
  c.grid_w = 8;
  const wm::WorldModel model(c, wm::init_params(c, 1));
  std::mt19937_64 rng(2);
  wm::History h;
  for (int f = 0; f < 3; ++f) h.frames.push_back(gaussian(rng, c.n_tokens(), c.token_dim));
  for (int f = 0; f < 2; ++f) h.actions.push_back(gaussian(rng, 1, 2, 0.05));
  std::vector<Tensor> plans;
  for (int k = 0; k < 100; ++k) plans.push_back(gaussian(rng, 5, 2, 0.05));
  const wm::DropMask keep = plan::sample_mask_random(rng, c.n_tokens(), p);
  wm::ForwardCounter counter;
  for (auto _ : state) benchmark::DoNotOptimize(model.rollout_batch(h, plans, keep, counter));
  state.counters["kept"] = static_cast<double>(keep.size());
  state.counters["forwards/s"] = benchmark::Counter(static_cast<double>(counter.value()), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_RolloutBatch)->Arg(0)->Arg(30)->Arg(50)->Arg(90)->Unit(benchmark::kMillisecond);

void BM_MultiHeadAttention(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  const Tensor q = gaussian(rng, 32 * t, 64), k = gaussian(rng, 32 * t, 64), v = gaussian(rng, 32 * t, 64);
  for (auto _ : state) {
    diff::Graph g(false);
    benchmark::DoNotOptimize(
        g.value(diff::multi_head_attention(g, g.constant(q), g.constant(k), g.constant(v), {4, t, t}, {})));
  }
  state.SetComplexityN(static_cast<benchmark::IterationCount>(t));
}
BENCHMARK(BM_MultiHeadAttention)->RangeMultiplier(2)->Range(8, 128)->Complexity()->Unit(benchmark::kMicrosecond);

void BM_Hungarian(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(4);
  const Tensor cost = gaussian(rng, n, n);
  for (auto _ : state) benchmark::DoNotOptimize(plan::hungarian_match(cost));
  state.SetComplexityN(static_cast<benchmark::IterationCount>(n));
}
BENCHMARK(BM_Hungarian)->RangeMultiplier(2)->Range(4, 64)->Complexity(benchmark::oNCubed);

void BM_AtcCluster(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(5);
  const Tensor tokens = gaussian(rng, 64, 16);
  for (auto _ : state) benchmark::DoNotOptimize(plan::atc_cluster(tokens, k));
}
BENCHMARK(BM_AtcCluster)->Arg(6)->Arg(32)->Arg(45)->Unit(benchmark::kMicrosecond);

void BM_CemQuadratic(benchmark::State& state) {
  plan::CemConfig c;
  for (auto _ : state) {
    benchmark::DoNotOptimize(plan::cem_optimize(c, [](std::size_t, std::span<const Tensor> plans) {
      std::vector<double> s;
      for (const Tensor& p : plans) {
        double v = 0.0;
        for (double x : p.values()) v += (x - 0.02) * (x - 0.02);
        s.push_back(v);
      }
      return s;
    }));
  }
}
BENCHMARK(BM_CemQuadratic)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
