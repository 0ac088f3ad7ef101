#include <benchmark/benchmark.h>

#include "cpslab/paths.hpp"
#include "cpslab/skeleton.hpp"

using namespace cpslab;

namespace {

GridPtr grid(std::size_t steps) { return make_grid(TimeGrid::uniform(1.0, steps)); }

FbmSpec fbm(double h)
{
    FbmSpec s;
    s.hurst = h;
    s.sigma = 0.3;
    s.s0 = 100.0;
    return s;
}

void BM_FbmDriverReference(benchmark::State& st)
{
    const auto g = grid(static_cast<std::size_t>(st.range(0)));
    for (auto _ : st)
        benchmark::DoNotOptimize(reference::sample_fbm_driver(0.7, g, 256, 1));
}

void BM_FbmDriverParallel(benchmark::State& st)
{
    const auto g = grid(static_cast<std::size_t>(st.range(0)));
    const Exec ex{static_cast<int>(st.range(1))};
    for (auto _ : st)
        benchmark::DoNotOptimize(sample_fbm_driver(0.7, g, 256, 1, ex));
}

void BM_GbmReference(benchmark::State& st)
{
    const auto g = grid(1000);
    GbmSpec s;
    s.mu = {0.05, 0.05};
    s.sigma = {0.2, 0.3};
    s.s0 = {100.0, 100.0};
    for (auto _ : st)
        benchmark::DoNotOptimize(reference::sample_gbm(s, g, static_cast<std::size_t>(st.range(0)), 1));
}

void BM_GbmParallel(benchmark::State& st)
{
    const auto g = grid(1000);
    GbmSpec s;
    s.mu = {0.05, 0.05};
    s.sigma = {0.2, 0.3};
    s.s0 = {100.0, 100.0};
    const Exec ex{static_cast<int>(st.range(1))};
    for (auto _ : st)
        benchmark::DoNotOptimize(sample_gbm(s, g, static_cast<std::size_t>(st.range(0)), 1, ex));
}

void BM_LadderReference(benchmark::State& st)
{
    const auto paths = sample_gfbm(fbm(0.7), grid(2000), static_cast<std::size_t>(st.range(0)), 3);
    for (auto _ : st)
        benchmark::DoNotOptimize(reference::extract_ladders(paths, 0.05, LadderMode::multiplicative));
}

void BM_LadderParallel(benchmark::State& st)
{
    const auto paths = sample_gfbm(fbm(0.7), grid(2000), static_cast<std::size_t>(st.range(0)), 3);
    const Exec ex{static_cast<int>(st.range(1))};
    for (auto _ : st)
        benchmark::DoNotOptimize(extract_ladders(paths, 0.05, LadderMode::multiplicative, {}, ex));
}

}  // namespace

BENCHMARK(BM_FbmDriverReference)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FbmDriverParallel)->Args({500, 1})->Args({500, 4})->Args({2000, 1})->Args({2000, 4})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GbmReference)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GbmParallel)->Args({1000, 1})->Args({1000, 4})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LadderReference)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LadderParallel)->Args({500, 1})->Args({500, 4})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
