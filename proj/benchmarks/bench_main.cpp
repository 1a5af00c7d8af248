#include <benchmark/benchmark.h>

#include "tsqr/bias_oracle.hpp"
#include "tsqr/bootstrap.hpp"
#include "tsqr/dgp.hpp"
#include "tsqr/qreg.hpp"
#include "tsqr/sqe.hpp"
#include "tsqr/taustep.hpp"

using namespace tsqr;

namespace {

dgp::SeriesSample sample(std::size_t n) { return dgp::find_dgp("asym_tvarch").simulate(n, 1); }

void BM_Simulate(benchmark::State& state) {
  const auto& spec = dgp::find_dgp("asym_tvarch");
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(spec.simulate(static_cast<std::size_t>(state.range(0)), ++seed));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Simulate)->Arg(1000)->Arg(10000);

void BM_SolveCold(benchmark::State& state) {
  const auto s = sample(static_cast<std::size_t>(state.range(0)));
  const auto d = qreg::build_design(s.values, 1, true);
  const auto w = qreg::eval_weights(qreg::WeightSpec::power(2.0), d);
  for (auto _ : state) benchmark::DoNotOptimize(qreg::solve_wqr(d, w, 0.3));
}
BENCHMARK(BM_SolveCold)->Arg(500)->Arg(2000)->Arg(10000)->Unit(benchmark::kMicrosecond);

void BM_Path(benchmark::State& state) {
  const auto s = sample(2000);
  const auto d = qreg::build_design(s.values, 1, true);
  sqe::PathOptions opts;
  opts.warm_start = state.range(0) != 0;
  const auto grid = sqe::TauGrid::make();
  for (auto _ : state) benchmark::DoNotOptimize(sqe::estimate_path(d, qreg::WeightSpec::power(2.0), grid, opts));
}
BENCHMARK(BM_Path)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TwoStep(benchmark::State& state) {
  const auto s = sample(static_cast<std::size_t>(state.range(0)));
  const taustep::TwoStepConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(taustep::two_step(s, cfg));
}
BENCHMARK(BM_TwoStep)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_Bootstrap(benchmark::State& state) {
  const auto s = sample(1000);
  const taustep::TwoStepConfig cfg;
  const auto est = taustep::two_step(s, cfg);
  boot::BootstrapConfig bc;
  bc.replications = 20;
  for (auto _ : state) benchmark::DoNotOptimize(boot::bootstrap_two_step(s.values, est, cfg, bc));
}
BENCHMARK(BM_Bootstrap)->Unit(benchmark::kMillisecond);

void BM_OracleSolve(benchmark::State& state) {
  oracle::OracleConfig oc;
  oc.mc_paths = 20000;
  const oracle::BiasOracle orc(oracle::ParametricNoiseModel::from_dgp(dgp::find_dgp("asym_tvarch")), oc);
  for (auto _ : state) benchmark::DoNotOptimize(orc.solve_bias(0.3));
}
BENCHMARK(BM_OracleSolve)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
