#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "driftless/conditioning.hpp"
#include "driftless/model.hpp"
#include "driftless/schedule.hpp"
#include "driftless/synthworld.hpp"

namespace driftless {

struct TrainConfig {
  std::size_t iterations = 1500;
  std::size_t batch = 16;
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int s_max = 4;              // DF step size drawn from {0..s_max}
  double p_iid = 0.2;         // probability of fully independent timesteps
  double global_fraction = 0.2;  // share of samples with a replicated global prompt
  std::uint64_t seed = 1;
  std::size_t smoothing = 50;  // moving-average window for the smoothed loss

  void validate() const;
};

struct TrainRecord {
  std::size_t iteration = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double wall_time = 0.0;  // seconds since training started
};

/// One training example: an F_window-frame clean window and its prompts.
struct TrainSample {
  Matrix z0;
  PromptTrack prompts;
};

/// Random windows cut from a set of clips. With probability
/// `global_fraction` the window is paired with its replicated global caption
/// instead of its frame-level captions.
class WindowSampler {
 public:
  WindowSampler(const World& world, std::vector<Clip> clips, std::size_t window,
                double global_fraction);

  TrainSample next(Rng& rng) const;
  [[nodiscard]] std::size_t window() const noexcept { return window_; }

 private:
  const World& world_;
  std::vector<Clip> clips_;
  std::size_t window_;
  double global_fraction_;
};

/// Noise draw for one sample: per-frame timesteps, eps and the noised input.
struct DfDraw {
  LatentSequence noisy;
};

/// Timesteps (ramp with probability 1 - p_iid, otherwise iid, step size
/// uniform in {0..s_max}) and noise for one window.
DfDraw draw_df_noise(const Matrix& z0, const NoiseSchedule& schedule, int s_max, double p_iid,
                     Rng& rng);

/// Mean over the batch of the per-sample x0 mean squared error, recorded on
/// `tape` against the given parameter leaves.
Var df_loss(Tape& tape, const std::vector<Var>& params, const DenoiserConfig& config,
            const std::vector<TrainSample>& batch, const std::vector<DfDraw>& draws);

/// Same objective for any denoiser, without gradients.
double df_loss_value(const Denoiser& denoiser, const std::vector<TrainSample>& batch,
                     const std::vector<DfDraw>& draws);

/// Adam with bias correction over a fixed list of parameter matrices.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps);
  void step(std::vector<Matrix>& params, const std::vector<Matrix>& grads);
  [[nodiscard]] std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

struct TrainResult {
  DenoiserWeights weights;
  std::vector<TrainRecord> log;
};

/// Per-sample forward and backward passes may run on several threads; the
/// gradients are always reduced in sample order, so results do not depend on
/// the thread count. Throws DivergenceError (after logging the offending
/// record) when the loss becomes non-finite.
TrainResult train(const TrainConfig& config, const DenoiserConfig& model, DenoiserWeights init,
                  const WindowSampler& data, const NoiseSchedule& schedule,
                  const std::function<void(const TrainRecord&)>& on_record = {});

/// Trailing moving average of the loss column.
std::vector<double> smoothed_loss(const std::vector<TrainRecord>& log, std::size_t window);

void write_train_log(const std::filesystem::path& path, const std::vector<TrainRecord>& log);

}  // namespace driftless
