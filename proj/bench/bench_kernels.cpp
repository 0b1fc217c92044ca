// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0
//
// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include <vector>

#include "hk/kernels.hpp"
#include "hk/model.hpp"
#include "hk/rng.hpp"

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  hk::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) {
    x = rng.normal();
  }
  return v;
}

template <auto Gemm>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1);
  const auto b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(a, b, c, n, n, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <auto Softmax>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  constexpr std::size_t cols = 32;
  const auto x = random_vector(rows * cols, 3);
  std::vector<double> y(rows * cols);
  for (auto _ : state) {
    Softmax(x, y, rows, cols);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * cols));
}

void BM_ForwardBackward(benchmark::State& state) {
  hk::ModelConfig config;
  config.num_layers = 2;
  config.d_model = static_cast<std::size_t>(state.range(0));
  config.num_heads = 2;
  config.d_ff = 2 * config.d_model;
  config.max_len = 16;
  const hk::Model model(config, 1);
  hk::TokenBatch batch{32, 16, std::vector<int>(32 * 16)};
  hk::Rng rng(4);
  for (auto& id : batch.ids) {
    id = static_cast<int>(rng.index(config.vocab_size));
  }
  for (auto _ : state) {
    const auto trace = model.forward(batch, {hk::Mode::train, 9, false, {}});
    hk::backward(hk::sum(trace.output));
  }
}

}  // namespace

BENCHMARK(BM_Gemm<hk::kernels::gemm_nn>)->Name("gemm_nn/omp")->Arg(32)->Arg(64)->Arg(128);
BENCHMARK(BM_Gemm<hk::kernels::reference::gemm_nn>)->Name("gemm_nn/serial")->Arg(32)->Arg(64)->Arg(128);
BENCHMARK(BM_Gemm<hk::kernels::gemm_nt>)->Name("gemm_nt/omp")->Arg(64)->Arg(128);
BENCHMARK(BM_Gemm<hk::kernels::reference::gemm_nt>)->Name("gemm_nt/serial")->Arg(64)->Arg(128);
BENCHMARK(BM_Gemm<hk::kernels::gemm_tn>)->Name("gemm_tn/omp")->Arg(64)->Arg(128);
BENCHMARK(BM_Gemm<hk::kernels::reference::gemm_tn>)->Name("gemm_tn/serial")->Arg(64)->Arg(128);
BENCHMARK(BM_Softmax<hk::kernels::softmax_rows>)->Name("softmax/omp")->Arg(1024)->Arg(8192);
BENCHMARK(BM_Softmax<hk::kernels::reference::softmax_rows>)->Name("softmax/serial")->Arg(1024)->Arg(8192);
BENCHMARK(BM_ForwardBackward)->Name("model_step")->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
