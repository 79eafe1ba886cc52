// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <vector>

#include "apd/gated_sim.hpp"
#include "apd/link_model.hpp"
#include "apd/profile_io.hpp"

namespace {

apd::SimConfig sim_config(std::uint32_t streams) {
  apd::SimConfig cfg;
  cfg.profile = apd::find_profile(apd::builtin_profiles(), "epitaxx-60");
  cfg.link.distance_km = 30.0;
  cfg.n_gates = 2'000'000;
  cfg.streams = streams;
  cfg.seed = 1;
  return cfg;
}

void BM_simulation_serial(benchmark::State& state) {
  const auto cfg = sim_config(static_cast<std::uint32_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(apd::run_simulation_serial(cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.n_gates));
}

void BM_simulation_omp(benchmark::State& state) {
  const auto cfg = sim_config(static_cast<std::uint32_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(apd::run_simulation(cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.n_gates));
}

void BM_link_curve_serial(benchmark::State& state) {
  const auto prof = apd::find_profile(apd::builtin_profiles(), "epitaxx-60");
  const auto grid = apd::distance_grid(100.0, 0.01);
  for (auto _ : state)
    benchmark::DoNotOptimize(apd::link_curve_serial(apd::LinkConfig{}, prof, apd::QberOptions{}, grid));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(grid.size()));
}

void BM_link_curve_omp(benchmark::State& state) {
  const auto prof = apd::find_profile(apd::builtin_profiles(), "epitaxx-60");
  const auto grid = apd::distance_grid(100.0, 0.01);
  for (auto _ : state) benchmark::DoNotOptimize(apd::link_curve(apd::LinkConfig{}, prof, apd::QberOptions{}, grid));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(grid.size()));
}

apd::SimConfig double_gate_config() {
  apd::SimConfig cfg;
  cfg.profile = apd::find_profile(apd::builtin_profiles(), "epitaxx-60");
  cfg.link.mu = 1.0;
  cfg.link.receiver_transmission = 1.0;
  cfg.link.f_rep = 1e8;
  cfg.n_gates = 100'000;
  return cfg;
}

const std::vector<double> kDelays = {20e-9, 50e-9, 100e-9, 200e-9, 500e-9, 1e-6, 2e-6, 5e-6, 10e-6, 20e-6};

void BM_afterpulse_curve_serial(benchmark::State& state) {
  const auto cfg = double_gate_config();
  for (auto _ : state) benchmark::DoNotOptimize(apd::empirical_afterpulse_curve_serial(cfg, kDelays));
}

void BM_afterpulse_curve_omp(benchmark::State& state) {
  const auto cfg = double_gate_config();
  for (auto _ : state) benchmark::DoNotOptimize(apd::empirical_afterpulse_curve(cfg, kDelays));
}

}  // namespace

BENCHMARK(BM_simulation_serial)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_simulation_omp)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_link_curve_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_link_curve_omp)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_afterpulse_curve_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_afterpulse_curve_omp)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
