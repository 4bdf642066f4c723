// Serial reference kernels against their OpenMP versions.
#include <benchmark/benchmark.h>

#include <vector>

#include "driftless/conditioning.hpp"
#include "driftless/inference.hpp"
#include "driftless/kernels.hpp"
#include "driftless/model.hpp"
#include "driftless/rng.hpp"
#include "driftless/schedule.hpp"
#include "driftless/synthworld.hpp"

using namespace driftless;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  std::vector<double> v(n);
  Rng(seed).fill_normal(v);
  return v;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = normals(n * n, 1);
  const auto b = normals(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::matmul_parallel(a.data(), b.data(), c.data(), n, n, n);
    } else {
      kernels::matmul_serial(a.data(), b.data(), c.data(), n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

// Default model size with a random head, 8 windows over 126 frames.
void BM_Pmwd(benchmark::State& state) {
  const bool parallel = state.range(0) != 0;
  const World world{WorldParams{}};
  const NoiseSchedule schedule = build_schedule(1000, 1e-4, 0.02, ScheduleKind::kLinear);
  DenoiserConfig config;
  DenoiserWeights weights = init_weights(config, 5);
  Rng rng(6);
  for (std::size_t i = 0; i < weights.names.size(); ++i) {
    if (weights.names[i] == "out.w") {
      for (std::size_t r = 0; r < weights.values[i].rows(); ++r) {
        rng.fill_normal(weights.values[i].row(r));
      }
    }
  }
  const DitDenoiser dit(config, weights);
  const SceneScript script = world.sample_script(6, 126, rng);
  const PromptTrack prompts =
      build_prompt_track(CaptionDocument{script.captions}, world.conditioning_embedder(), 1);
  const WindowPlan plan = plan_windows(126, 21, 8);
  PmwdOptions opt;
  opt.sampler = {5, 0.0};
  opt.parallel = parallel;
  for (auto _ : state) {
    benchmark::DoNotOptimize(pmwd_generate(dit, plan, prompts, schedule, Rng(7), opt));
  }
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Pmwd)->Name("pmwd/serial")->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Pmwd)->Name("pmwd/parallel")->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
