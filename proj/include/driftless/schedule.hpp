#pragma once

#include <cstddef>
#include <vector>

#include "driftless/matrix.hpp"
#include "driftless/rng.hpp"

namespace driftless {

enum class ScheduleKind { kLinear, kCosine };

/// Discrete forward-process schedule. alpha_bars has T+1 entries with
/// alpha_bars[0] == 1 so that t = 0 ("clean") is an ordinary timestep.
struct NoiseSchedule {
  int steps = 0;  // T
  std::vector<double> betas;       // betas[t-1] for t in 1..T
  std::vector<double> alphas;      // 1 - betas
  std::vector<double> alpha_bars;  // size T+1

  [[nodiscard]] double alpha_bar(int t) const;
};

NoiseSchedule build_schedule(int steps, double beta_min, double beta_max, ScheduleKind kind);

/// One denoising timestep per latent frame.
struct TimestepVector {
  std::vector<int> values;

  TimestepVector() = default;
  explicit TimestepVector(std::vector<int> v) : values(std::move(v)) {}
  static TimestepVector uniform(std::size_t frames, int t) {
    return TimestepVector(std::vector<int>(frames, t));
  }

  [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
  int operator[](std::size_t i) const { return values[i]; }
  int& operator[](std::size_t i) { return values[i]; }
  bool operator==(const TimestepVector&) const = default;
};

/// F x D latents with their per-frame timesteps.
struct LatentSequence {
  Matrix latents;
  TimestepVector timesteps;

  [[nodiscard]] std::size_t frames() const noexcept { return latents.rows(); }
  [[nodiscard]] std::size_t dims() const noexcept { return latents.cols(); }
};

/// Frame f: sqrt(ab[t_f]) * z0_f + sqrt(1 - ab[t_f]) * eps_f.
LatentSequence add_noise(const Matrix& z0, const TimestepVector& t, const Matrix& eps,
                         const NoiseSchedule& schedule);

enum class TimestepMode { kRamp, kIid, kUniform };

/// Diffusion Forcing noise levels for one training window.
TimestepVector sample_df_timesteps(std::size_t frames, int steps, int step_size,
                                   TimestepMode mode, Rng& rng);

/// Per-frame DDIM update from t to next_t given an x0 prediction.
///
/// eta = 0 is deterministic. For eta > 0, `fresh_noise` (F x D) must be
/// supplied; rows of frames whose timestep does not change are ignored.
LatentSequence sampler_step(const LatentSequence& current, const Matrix& x0_pred,
                            const TimestepVector& next_t, const NoiseSchedule& schedule,
                            double eta, const Matrix* fresh_noise = nullptr);

/// Descending timestep grid T = g_0 > g_1 > ... > g_n = 0 with `count`
/// evenly spaced (rounded) steps; count is clamped to [1, T].
std::vector<int> timestep_grid(int steps, int count);

}  // namespace driftless
