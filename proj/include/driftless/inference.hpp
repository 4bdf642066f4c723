#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "driftless/conditioning.hpp"
#include "driftless/model.hpp"
#include "driftless/rng.hpp"
#include "driftless/schedule.hpp"

namespace driftless {

/// K overlapping windows tiling [0, F) with a constant slide.
struct WindowPlan {
  std::size_t frames = 0;   // F
  std::size_t window = 0;   // F_window
  std::size_t count = 0;    // K
  std::size_t slide = 0;    // F_slide
  std::size_t overlap = 0;  // F_overlapped
  std::vector<std::size_t> starts;
  std::vector<std::size_t> coverage;
};

/// Window counts K for which plan_windows(F, F_window, K) succeeds.
std::vector<std::size_t> admissible_window_counts(std::size_t frames, std::size_t window);

/// overlap = (K * F_window - F) / (K - 1), slide = F_window - overlap.
/// Throws GeometryError naming the three admissible K nearest the request.
WindowPlan plan_windows(std::size_t frames, std::size_t window, std::size_t count);

/// Frames pinned clean (t = 0) throughout generation.
struct BoundaryCondition {
  std::vector<std::size_t> positions;
  Matrix latents;  // one row per position
};

struct SamplerOptions {
  int steps = 50;    // size of the descending timestep grid
  double eta = 0.0;  // 0 = deterministic DDIM
};

/// Noise rows are addressed by (stream, step, frame) so that every code path
/// that should agree draws identical values.
Matrix initial_noise(const Rng& rng, std::size_t first_frame, std::size_t count, std::size_t dims);
Matrix step_noise(const Rng& rng, std::size_t step, std::size_t first_frame, std::size_t count,
                  std::size_t dims);

/// Denoises a single window of fresh noise from T to 0 with uniform timesteps.
/// Frame f (absolute index first_frame + f) uses the stream rows above.
Matrix denoise_window(const Denoiser& denoiser, const PromptTrack& prompts,
                      const NoiseSchedule& schedule, const SamplerOptions& options, const Rng& rng,
                      std::size_t first_frame = 0);

struct PmwdStep {
  std::size_t index = 0;
  int t = 0;
  int next_t = 0;
  const LatentSequence* state = nullptr;               // after fusion and boundary overwrite
  const std::vector<std::size_t>* contributions = nullptr;  // windows summed per frame
};

struct PmwdOptions {
  SamplerOptions sampler;
  bool parallel = true;
  /// Evaluation order of windows (a permutation of 0..K-1); reduction is
  /// always in ascending k.
  std::vector<std::size_t> evaluation_order;
  std::function<void(const PmwdStep&)> observer;
};

LatentSequence pmwd_generate(const Denoiser& denoiser, const WindowPlan& plan,
                             const PromptTrack& prompts, const NoiseSchedule& schedule,
                             const Rng& rng, const PmwdOptions& options = {},
                             const BoundaryCondition* boundary = nullptr);

struct SlidingOptions {
  SamplerOptions sampler;
  std::size_t window = 21;
  std::size_t slide = 15;
  int history_t = 0;  // T_history
};

/// Sequential generation; the last slide may be shorter than `slide`.
LatentSequence sliding_window_generate(const Denoiser& denoiser, const PromptTrack& prompts,
                                       const NoiseSchedule& schedule, const Rng& rng,
                                       const SlidingOptions& options,
                                       const Matrix* initial_window = nullptr);

struct FifoStep {
  std::size_t index = 0;
  std::size_t emitted_frame = 0;
  int emitted_t = 0;
  std::vector<int> queue_before;
  std::vector<int> queue_after;
};

struct FifoOptions {
  SamplerOptions sampler;  // warm-up grid and eta
  std::size_t window = 21;
  std::function<void(const FifoStep&)> observer;
};

/// Diagonal levels tau_k = round((k + 1) T / F_window), k = 0..F_window-1.
std::vector<int> fifo_levels(int steps, std::size_t window);

/// Warm-up denoises the first window, re-noises frame k to tau_k and fills the
/// queue with it. Each step moves every slot one level down, emits the head
/// and enqueues fresh noise at T for the next prompt; once prompts run out the
/// queue drains one frame per step.
LatentSequence fifo_generate(const Denoiser& denoiser, const PromptTrack& prompts,
                             std::size_t total_frames, const NoiseSchedule& schedule,
                             const Rng& rng, const FifoOptions& options);

}  // namespace driftless
