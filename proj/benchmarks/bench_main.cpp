// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "medusa/engine.hpp"
#include "medusa/model.hpp"
#include "medusa/tree.hpp"

namespace {

using namespace medusa;

ModelConfig bench_config() {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 128;
  c.n_q_heads = 8;
  c.n_kv_heads = 2;
  c.d_ff = 344;
  c.vocab_size = 512;
  c.max_seq_len = 512;
  c.num_medusa_heads = 3;
  return c;
}

const ModelBundle<float>& bench_bundle() {
  static const auto bundle = cast_bundle<float>(
      init_model(bench_config(), 7, {.head_init = HeadInit::random, .head_std = 0.05}));
  return bundle;
}

void BM_CompileDefaultTree(benchmark::State& state) {
  const auto spec = default_tree(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(compile_tree(spec));
}
BENCHMARK(BM_CompileDefaultTree)->Arg(1)->Arg(3)->Arg(5);

// One backbone pass over a single token at context length range(0).
void BM_DecodeOne(benchmark::State& state) {
  const auto& bundle = bench_bundle();
  const int ctx = static_cast<int>(state.range(0));
  std::vector<int> prompt(ctx, 5);
  KvCache<float> cache(bundle.config, 1);
  for (auto _ : state) {
    state.PauseTiming();
    cache.set_logical_len(0);
    forward_prefill<float>(bundle, prompt, cache);
    state.ResumeTiming();
    benchmark::DoNotOptimize(forward_decode_one<float>(bundle, 9, cache));
  }
}
BENCHMARK(BM_DecodeOne)->Arg(16)->Arg(128)->Arg(384);

// One tree-attention pass over the default tree at context length range(0).
void BM_ForwardTree(benchmark::State& state) {
  const auto& bundle = bench_bundle();
  const auto buffers = compile_tree(default_tree(3));
  const int ctx = static_cast<int>(state.range(0));
  std::vector<int> prompt(ctx, 5), tokens(buffers.num_nodes(), 9);
  KvCache<float> cache(bundle.config, buffers.num_nodes());
  forward_prefill<float>(bundle, prompt, cache);
  for (auto _ : state) benchmark::DoNotOptimize(forward_tree<float>(bundle, tokens, buffers, cache));
  state.counters["nodes"] = buffers.num_nodes();
}
BENCHMARK(BM_ForwardTree)->Arg(16)->Arg(128)->Arg(384);

void BM_GenerateSpeculative(benchmark::State& state) {
  const auto& bundle = bench_bundle();
  const auto buffers = compile_tree(default_tree(3));
  const std::vector<int> prompt{0, 17, 33, 5};
  GenerationOptions gen;
  gen.max_new_tokens = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(generate_speculative(bundle, buffers, prompt, gen));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GenerateSpeculative)->Arg(64);

void BM_GenerateAutoregressive(benchmark::State& state) {
  const auto& bundle = bench_bundle();
  const std::vector<int> prompt{0, 17, 33, 5};
  GenerationOptions gen;
  gen.max_new_tokens = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(generate_autoregressive(bundle, prompt, gen));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GenerateAutoregressive)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
