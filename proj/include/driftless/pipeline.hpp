#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "driftless/config.hpp"
#include "driftless/inference.hpp"
#include "driftless/metrics.hpp"
#include "driftless/model.hpp"
#include "driftless/synthworld.hpp"
#include "driftless/training.hpp"

namespace driftless {

using Progress = std::function<void(const std::string&)>;

NoiseSchedule make_schedule(const RunConfig& run);

/// Writes config.txt (the resolved settings) into `dir`, creating it.
void write_run_config(const std::filesystem::path& dir, const RunConfig& run);

/// Evaluation script `index`: inference.scenes scenes over inference.frames frames.
SceneScript evaluation_script(const RunConfig& run, const World& world, std::size_t index);
PromptTrack prompts_for(const World& world, const SceneScript& script, PromptMode mode);

/// Runs one scheduler; `noise_seed` fixes every random draw.
Matrix generate(const RunConfig& run, const Denoiser& denoiser, const NoiseSchedule& schedule,
                const PromptTrack& prompts, InferenceMode mode, std::uint64_t noise_seed);

struct RunMetrics {
  std::size_t script = 0;
  InferenceMode mode = InferenceMode::kPmwd;
  PromptMode prompt = PromptMode::kFrame;
  double mean_cd = 0.0;
  double frame_consistency = 0.0;
  double global_similarity = 0.0;
  double drift_slope = 0.0;
  std::vector<double> drift_errors;
};

/// Metrics against the script's frame-level captions, whatever prompts drove
/// generation.
RunMetrics evaluate_video(const RunConfig& run, const World& world, const SceneScript& script,
                          const Matrix& video);

using Arm = std::pair<InferenceMode, PromptMode>;
/// PMWD/frame, PMWD/global, sliding/frame, FIFO/frame, FIFO/global.
std::vector<Arm> benchmark_arms();

/// eval.seeds scripts, every arm on each; arms of one script share noise.
std::vector<RunMetrics> run_benchmark(const RunConfig& run, const World& world,
                                      const NoiseSchedule& schedule, const Denoiser& denoiser,
                                      const std::vector<Arm>& arms, const Progress& progress = {});

// Stages behind the CLI commands. Each writes config.txt into its output dir.
void gen_data_stage(const RunConfig& run, const std::filesystem::path& out,
                    const Progress& progress = {});
TrainResult train_stage(const RunConfig& run, const std::filesystem::path& dataset,
                        const std::filesystem::path& out, const Progress& progress = {});
void infer_stage(const RunConfig& run, const std::filesystem::path& checkpoint,
                 const std::filesystem::path& out);
RunMetrics eval_stage(const RunConfig& run, const std::filesystem::path& infer_dir,
                      const std::filesystem::path& out);
std::vector<RunMetrics> report_stage(const RunConfig& run, const std::filesystem::path& checkpoint,
                                     const std::filesystem::path& out,
                                     const Progress& progress = {});

/// gen-data, train, infer for each benchmark arm, eval, report under `out`.
void full_pipeline(const RunConfig& run, const std::filesystem::path& out,
                   const Progress& progress = {});

}  // namespace driftless
