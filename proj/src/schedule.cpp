#include "driftless/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "driftless/errors.hpp"

namespace driftless {

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps) {
    throw RangeError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps) +
                     "]");
  }
  return alpha_bars[static_cast<std::size_t>(t)];
}

NoiseSchedule build_schedule(int steps, double beta_min, double beta_max, ScheduleKind kind) {
  if (steps < 2) {
    throw ConfigError("schedule: T must be at least 2");
  }
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw ConfigError("schedule: need 0 < beta_min <= beta_max < 1");
  }
  NoiseSchedule s;
  s.steps = steps;
  s.betas.resize(static_cast<std::size_t>(steps));
  const double denom = static_cast<double>(steps - 1);
  for (int t = 1; t <= steps; ++t) {
    double beta = 0.0;
    if (kind == ScheduleKind::kLinear) {
      beta = beta_min + (beta_max - beta_min) * static_cast<double>(t - 1) / denom;
    } else {
      constexpr double offset = 0.008;
      auto f = [&](int u) {
        const double x = (static_cast<double>(u) / steps + offset) / (1.0 + offset);
        const double c = std::cos(x * std::numbers::pi / 2.0);
        return c * c;
      };
      beta = std::clamp(1.0 - f(t) / f(t - 1), beta_min, beta_max);
    }
    s.betas[static_cast<std::size_t>(t - 1)] = beta;
  }
  s.alphas.resize(s.betas.size());
  s.alpha_bars.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  for (std::size_t i = 0; i < s.betas.size(); ++i) {
    s.alphas[i] = 1.0 - s.betas[i];
    s.alpha_bars[i + 1] = s.alpha_bars[i] * s.alphas[i];
  }
  return s;
}

LatentSequence add_noise(const Matrix& z0, const TimestepVector& t, const Matrix& eps,
                         const NoiseSchedule& schedule) {
  if (t.size() != z0.rows()) {
    throw DimensionError("add_noise: timestep vector has " + std::to_string(t.size()) +
                         " entries for " + std::to_string(z0.rows()) + " frames");
  }
  if (eps.rows() != z0.rows() || eps.cols() != z0.cols()) {
    throw DimensionError("add_noise: noise shape differs from latents");
  }
  LatentSequence out{Matrix(z0.rows(), z0.cols()), t};
  for (std::size_t f = 0; f < z0.rows(); ++f) {
    const double ab = schedule.alpha_bar(t[f]);
    const double signal = std::sqrt(ab);
    const double noise = std::sqrt(1.0 - ab);
    const auto clean = z0.row(f);
    const auto e = eps.row(f);
    auto dst = out.latents.row(f);
    for (std::size_t d = 0; d < dst.size(); ++d) {
      dst[d] = signal * clean[d] + noise * e[d];
    }
  }
  return out;
}

TimestepVector sample_df_timesteps(std::size_t frames, int steps, int step_size,
                                   TimestepMode mode, Rng& rng) {
  if (step_size < 0) {
    throw ConfigError("sample_df_timesteps: step_size must be >= 0");
  }
  if (frames == 0) {
    return {};
  }
  TimestepVector t(std::vector<int>(frames, 0));
  switch (mode) {
    case TimestepMode::kRamp: {
      const auto reference =
          static_cast<std::int64_t>(rng.uniform_int(0, static_cast<std::int64_t>(frames) - 1));
      const std::int64_t t_ref = rng.uniform_int(1, steps);
      for (std::size_t f = 0; f < frames; ++f) {
        const std::int64_t raw =
            t_ref + (static_cast<std::int64_t>(f) - reference) * static_cast<std::int64_t>(step_size);
        t[f] = static_cast<int>(std::clamp<std::int64_t>(raw, 0, steps));
      }
      break;
    }
    case TimestepMode::kIid:
      for (std::size_t f = 0; f < frames; ++f) {
        t[f] = static_cast<int>(rng.uniform_int(1, steps));
      }
      break;
    case TimestepMode::kUniform: {
      const int shared = static_cast<int>(rng.uniform_int(1, steps));
      std::fill(t.values.begin(), t.values.end(), shared);
      break;
    }
  }
  return t;
}

LatentSequence sampler_step(const LatentSequence& current, const Matrix& x0_pred,
                            const TimestepVector& next_t, const NoiseSchedule& schedule,
                            double eta, const Matrix* fresh_noise) {
  const Matrix& z = current.latents;
  const TimestepVector& t = current.timesteps;
  if (x0_pred.rows() != z.rows() || x0_pred.cols() != z.cols() || t.size() != z.rows() ||
      next_t.size() != z.rows()) {
    throw DimensionError("sampler_step: shape mismatch");
  }
  if (eta < 0.0) {
    throw ConfigError("sampler_step: eta must be >= 0");
  }
  LatentSequence out{z, next_t};
  for (std::size_t f = 0; f < z.rows(); ++f) {
    const int from = t[f];
    const int to = next_t[f];
    if (to > from) {
      throw ScheduleOrderError("sampler_step: frame " + std::to_string(f) + " would move from t=" +
                               std::to_string(from) + " to t=" + std::to_string(to));
    }
    if (to == from) {
      continue;
    }
    const double ab = schedule.alpha_bar(from);
    const double ab_next = schedule.alpha_bar(to);
    const auto x0 = x0_pred.row(f);
    auto dst = out.latents.row(f);
    if (to == 0) {
      std::copy(x0.begin(), x0.end(), dst.begin());
      continue;
    }
    double sigma = 0.0;
    if (eta > 0.0) {
      if (fresh_noise == nullptr || fresh_noise->rows() != z.rows() ||
          fresh_noise->cols() != z.cols()) {
        throw ContractError("sampler_step: eta > 0 needs an F x D fresh noise matrix");
      }
      sigma = eta * std::sqrt((1.0 - ab_next) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_next);
    }
    const double direction = std::sqrt(std::max(0.0, 1.0 - ab_next - sigma * sigma));
    const double sqrt_ab = std::sqrt(ab);
    const double inv_noise = 1.0 / std::sqrt(1.0 - ab);
    const double sqrt_ab_next = std::sqrt(ab_next);
    const auto zt = z.row(f);
    for (std::size_t d = 0; d < dst.size(); ++d) {
      const double eps_hat = (zt[d] - sqrt_ab * x0[d]) * inv_noise;
      double v = sqrt_ab_next * x0[d] + direction * eps_hat;
      if (sigma > 0.0) {
        v += sigma * (*fresh_noise)(f, d);
      }
      dst[d] = v;
    }
  }
  return out;
}

std::vector<int> timestep_grid(int steps, int count) {
  count = std::clamp(count, 1, steps);
  std::vector<int> grid;
  grid.reserve(static_cast<std::size_t>(count) + 1);
  for (int i = 0; i <= count; ++i) {
    const double pos = static_cast<double>(steps) * static_cast<double>(count - i) / count;
    const int t = static_cast<int>(std::lround(pos));
    if (grid.empty() || t < grid.back()) {
      grid.push_back(t);
    }
  }
  return grid;
}

}  // namespace driftless
