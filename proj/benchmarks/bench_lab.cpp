#include <benchmark/benchmark.h>

#include "sfc/lab.hpp"

namespace {

void BM_VerifyBound(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  sfc::BoundInstance inst;
  for (std::size_t i = 0; i < n; ++i) inst.choice_probs.push_back(0.5 / static_cast<double>(n + i));
  double s = 0.0;
  for (double p : inst.choice_probs) s += p;
  inst.residual = 1.0 - s;
  for (auto _ : state) benchmark::DoNotOptimize(sfc::verify_bound(inst, 0.01));
  state.counters["assignments"] =
      static_cast<double>(sfc::composition_count(static_cast<std::uint64_t>(inst.residual / 0.01 + 0.5), n));
}
BENCHMARK(BM_VerifyBound)->Arg(2)->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_BuildTabular(benchmark::State& state) {
  sfc::TabularConfig cfg{8, 4, 3, 4, 1};
  for (auto _ : state) {
    ++cfg.seed;
    benchmark::DoNotOptimize(sfc::build_tabular_lm(cfg));
  }
}
BENCHMARK(BM_BuildTabular);

void BM_BayesFlip(benchmark::State& state) {
  const auto lm = sfc::build_tabular_lm({8, 4, 3, 4, 1});
  for (auto _ : state) benchmark::DoNotOptimize(lm.bayes_flip(2));
}
BENCHMARK(BM_BayesFlip);

}  // namespace
