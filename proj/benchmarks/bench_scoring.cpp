#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "sfc/scoring.hpp"

namespace {

struct Case {
  sfc::ChoiceSet choices;
  sfc::ChoiceProbabilities probs;
};

Case make_case(std::size_t n) {
  std::mt19937_64 rng(n);
  std::exponential_distribution<double> ex(1.0);
  std::vector<sfc::Choice> choices;
  std::vector<std::string> tokens;
  sfc::ChoiceProbabilities probs;
  probs.prior.emplace();
  std::vector<double> w(n);
  double s = 0.0;
  for (double& x : w) s += (x = ex(rng));
  for (std::size_t i = 0; i < n; ++i) {
    const std::string t = "tok" + std::to_string(i);
    choices.push_back({std::to_string(i), t});
    tokens.push_back(t);
    const double p = 0.8 * w[i] / s;
    probs.conditional.push_back(std::log(p));
    probs.prior->push_back(std::log(0.5 / static_cast<double>(n)));
    probs.first_token_mass[t] = p;
  }
  return {sfc::ChoiceSet(choices, 0, tokens), probs};
}

void BM_SequenceScore(benchmark::State& state) {
  const Case c = make_case(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sfc::sequence_score(c.probs, c.choices));
}
BENCHMARK(BM_SequenceScore)->Arg(4)->Arg(5)->Arg(16);

void BM_PmiScore(benchmark::State& state) {
  const Case c = make_case(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sfc::pmi_dc_score(c.probs, c.choices));
}
BENCHMARK(BM_PmiScore)->Arg(4)->Arg(5)->Arg(16);

void BM_CheckBounds(benchmark::State& state) {
  const Case c = make_case(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sfc::check_bounds(c.probs, c.choices));
}
BENCHMARK(BM_CheckBounds)->Arg(4)->Arg(5)->Arg(16);

}  // namespace
