// Serial reference paths against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "matchlab/field.hpp"
#include "matchlab/parallel.hpp"
#include "matchlab/spectral.hpp"

namespace {

using matchlab::spectral::Exec;

void structure_factor(benchmark::State& state, Exec exec) {
  const auto sample = matchlab::sample_uniform(static_cast<std::size_t>(state.range(0)), 1, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(matchlab::spectral::structure_factor(sample.points, 32, exec));
  }
}

void field_grid(benchmark::State& state, Exec exec) {
  const auto sample = matchlab::sample_uniform(1024, 1, 0);
  const matchlab::spectral::SpectralField field(sample.points, 1e-3, matchlab::KernelConfig{});
  const int m = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(field.grid(m, true, exec));
}

void pair_sum(benchmark::State& state, bool parallel) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto row = [](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 2000; ++j) s += 1.0 / static_cast<double>(1 + i + j);
    return s;
  };
  for (auto _ : state) {
    benchmark::DoNotOptimize(parallel ? matchlab::parallel::blocked_sum(n, row)
                                      : matchlab::parallel::blocked_sum_serial(n, row));
  }
}

}  // namespace

BENCHMARK_CAPTURE(structure_factor, serial, Exec::Serial)->Arg(1024)->Arg(4096);
BENCHMARK_CAPTURE(structure_factor, parallel, Exec::Parallel)->Arg(1024)->Arg(4096);
BENCHMARK_CAPTURE(field_grid, serial, Exec::Serial)->Arg(256)->Arg(512);
BENCHMARK_CAPTURE(field_grid, parallel, Exec::Parallel)->Arg(256)->Arg(512);
BENCHMARK_CAPTURE(pair_sum, serial, false)->Arg(1 << 16);
BENCHMARK_CAPTURE(pair_sum, parallel, true)->Arg(1 << 16);

BENCHMARK_MAIN();
