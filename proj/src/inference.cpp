#include "driftless/inference.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>

#include "driftless/errors.hpp"
#include "driftless/kernels.hpp"

namespace driftless {

namespace {

bool geometry_ok(std::size_t frames, std::size_t window, std::size_t count) {
  if (count < 1 || window < 1 || window > frames) {
    return false;
  }
  if (count == 1) {
    return frames == window;
  }
  if (count * window < frames) {
    return false;
  }
  const std::size_t excess = count * window - frames;
  return excess % (count - 1) == 0 && excess / (count - 1) < window;
}

Matrix rows_of(const Rng& base, std::size_t first_frame, std::size_t count, std::size_t dims) {
  Matrix m(count, dims);
  for (std::size_t i = 0; i < count; ++i) {
    Rng r = base.split(first_frame + i);
    r.fill_normal(m.row(i));
  }
  return m;
}

}  // namespace

std::vector<std::size_t> admissible_window_counts(std::size_t frames, std::size_t window) {
  std::vector<std::size_t> out;
  if (window == 0) {
    return out;
  }
  for (std::size_t k = 1; k <= frames; ++k) {
    if (geometry_ok(frames, window, k)) {
      out.push_back(k);
    }
  }
  return out;
}

WindowPlan plan_windows(std::size_t frames, std::size_t window, std::size_t count) {
  if (!geometry_ok(frames, window, count)) {
    auto options = admissible_window_counts(frames, window);
    std::stable_sort(options.begin(), options.end(), [count](std::size_t a, std::size_t b) {
      const auto da = a > count ? a - count : count - a;
      const auto db = b > count ? b - count : count - b;
      return da < db;
    });
    options.resize(std::min<std::size_t>(options.size(), 3));
    std::sort(options.begin(), options.end());
    std::string msg = "no window plan for F=" + std::to_string(frames) +
                      ", F_window=" + std::to_string(window) + ", K=" + std::to_string(count);
    if (options.empty()) {
      msg += "; no K is admissible";
    } else {
      msg += "; nearest admissible K:";
      for (std::size_t k : options) {
        msg += " " + std::to_string(k);
      }
    }
    throw GeometryError(msg);
  }
  WindowPlan plan;
  plan.frames = frames;
  plan.window = window;
  plan.count = count;
  plan.overlap = count == 1 ? 0 : (count * window - frames) / (count - 1);
  plan.slide = window - plan.overlap;
  plan.coverage.assign(frames, 0);
  for (std::size_t k = 0; k < count; ++k) {
    plan.starts.push_back(k * plan.slide);
    for (std::size_t f = plan.starts.back(); f < plan.starts.back() + window; ++f) {
      ++plan.coverage[f];
    }
  }
  return plan;
}

Matrix initial_noise(const Rng& rng, std::size_t first_frame, std::size_t count,
                     std::size_t dims) {
  return rows_of(rng.split(stream::kInitNoise), first_frame, count, dims);
}

Matrix step_noise(const Rng& rng, std::size_t step, std::size_t first_frame, std::size_t count,
                  std::size_t dims) {
  return rows_of(rng.split(stream::kStepNoise).split(step), first_frame, count, dims);
}

Matrix denoise_window(const Denoiser& denoiser, const PromptTrack& prompts,
                      const NoiseSchedule& schedule, const SamplerOptions& options, const Rng& rng,
                      std::size_t first_frame) {
  const std::size_t frames = prompts.frames;
  if (frames == 0) {
    throw ContractError("denoise_window: empty prompt track");
  }
  const std::size_t dims = denoiser.dims();
  const auto grid = timestep_grid(schedule.steps, options.steps);
  LatentSequence z{initial_noise(rng, first_frame, frames, dims),
                   TimestepVector::uniform(frames, schedule.steps)};
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const Matrix x0 = denoiser.predict_x0(z, prompts);
    const TimestepVector next = TimestepVector::uniform(frames, grid[i + 1]);
    if (options.eta > 0.0) {
      const Matrix noise = step_noise(rng, i, first_frame, frames, dims);
      z = sampler_step(z, x0, next, schedule, options.eta, &noise);
    } else {
      z = sampler_step(z, x0, next, schedule, 0.0);
    }
  }
  return z.latents;
}

namespace {

void check_boundary(const BoundaryCondition& b, std::size_t frames, std::size_t dims) {
  if (b.latents.rows() != b.positions.size() || (b.latents.rows() > 0 && b.latents.cols() != dims)) {
    throw DimensionError("boundary: one latent row of width D is needed per position");
  }
  for (std::size_t p : b.positions) {
    if (p >= frames) {
      throw RangeError("boundary: position " + std::to_string(p) + " outside [0, " +
                       std::to_string(frames) + ")");
    }
  }
}

void apply_boundary(const BoundaryCondition* b, LatentSequence& z) {
  if (b == nullptr) {
    return;
  }
  for (std::size_t i = 0; i < b->positions.size(); ++i) {
    const auto src = b->latents.row(i);
    std::copy(src.begin(), src.end(), z.latents.row(b->positions[i]).begin());
    z.timesteps[b->positions[i]] = 0;
  }
}

TimestepVector slice(const TimestepVector& t, std::size_t start, std::size_t count) {
  return TimestepVector(std::vector<int>(t.values.begin() + static_cast<std::ptrdiff_t>(start),
                                         t.values.begin() + static_cast<std::ptrdiff_t>(start + count)));
}

}  // namespace

LatentSequence pmwd_generate(const Denoiser& denoiser, const WindowPlan& plan,
                             const PromptTrack& prompts, const NoiseSchedule& schedule,
                             const Rng& rng, const PmwdOptions& options,
                             const BoundaryCondition* boundary) {
  if (prompts.frames != plan.frames) {
    throw ContractError("pmwd: prompt track has " + std::to_string(prompts.frames) +
                        " frames, plan covers " + std::to_string(plan.frames));
  }
  const std::size_t frames = plan.frames;
  const std::size_t dims = denoiser.dims();
  const std::size_t windows = plan.count;
  if (boundary != nullptr) {
    check_boundary(*boundary, frames, dims);
  }
  std::vector<std::size_t> order = options.evaluation_order;
  if (order.empty()) {
    order.resize(windows);
    std::iota(order.begin(), order.end(), 0);
  }
  {
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < sorted.size(); ++k) {
      if (sorted.size() != windows || sorted[k] != k) {
        throw ContractError("pmwd: evaluation order must be a permutation of the windows");
      }
    }
  }

  const auto grid = timestep_grid(schedule.steps, options.sampler.steps);
  LatentSequence z{initial_noise(rng, 0, frames, dims),
                   TimestepVector::uniform(frames, schedule.steps)};
  apply_boundary(boundary, z);
  std::vector<bool> pinned(frames, false);
  if (boundary != nullptr) {
    for (std::size_t p : boundary->positions) {
      pinned[p] = true;
    }
  }

  std::vector<LatentSequence> stepped(windows);
  std::vector<std::exception_ptr> errors(windows);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    TimestepVector next = TimestepVector::uniform(frames, grid[i + 1]);
    for (std::size_t f = 0; f < frames; ++f) {
      if (pinned[f]) {
        next[f] = 0;
      }
    }
    Matrix noise;
    if (options.sampler.eta > 0.0) {
      noise = step_noise(rng, i, 0, frames, dims);
    }
    const auto run_window = [&](std::size_t k) {
      try {
        const std::size_t s = plan.starts[k];
        const LatentSequence local{z.latents.row_block(s, plan.window),
                                   slice(z.timesteps, s, plan.window)};
        const Matrix x0 = denoiser.predict_x0(local, prompts.slice(s, plan.window));
        const TimestepVector local_next = slice(next, s, plan.window);
        if (options.sampler.eta > 0.0) {
          const Matrix local_noise = noise.row_block(s, plan.window);
          stepped[k] = sampler_step(local, x0, local_next, schedule, options.sampler.eta,
                                    &local_noise);
        } else {
          stepped[k] = sampler_step(local, x0, local_next, schedule, 0.0);
        }
      } catch (...) {
        errors[k] = std::current_exception();
      }
    };
    if (options.parallel && windows > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(kernels::thread_budget())
      for (std::size_t j = 0; j < windows; ++j) {
        run_window(order[j]);
      }
    } else {
      for (std::size_t j = 0; j < windows; ++j) {
        run_window(order[j]);
      }
    }
    for (const auto& e : errors) {
      if (e) {
        std::rethrow_exception(e);
      }
    }

    // Ascending-k reduction, then divide by the number of contributions.
    Matrix sum(frames, dims);
    std::vector<std::size_t> contributions(frames, 0);
    for (std::size_t k = 0; k < windows; ++k) {
      const std::size_t s = plan.starts[k];
      for (std::size_t r = 0; r < plan.window; ++r) {
        auto dst = sum.row(s + r);
        const auto src = stepped[k].latents.row(r);
        for (std::size_t d = 0; d < dims; ++d) {
          dst[d] += src[d];
        }
        ++contributions[s + r];
      }
    }
    for (std::size_t f = 0; f < frames; ++f) {
      const double c = static_cast<double>(contributions[f]);
      auto row = sum.row(f);
      for (double& x : row) {
        x /= c;
      }
    }
    z = LatentSequence{std::move(sum), next};
    apply_boundary(boundary, z);
    if (options.observer) {
      options.observer(PmwdStep{i, grid[i], grid[i + 1], &z, &contributions});
    }
  }
  return z;
}

LatentSequence sliding_window_generate(const Denoiser& denoiser, const PromptTrack& prompts,
                                       const NoiseSchedule& schedule, const Rng& rng,
                                       const SlidingOptions& options,
                                       const Matrix* initial_window) {
  const std::size_t window = options.window;
  const std::size_t slide = options.slide;
  if (slide < 1 || slide >= window) {
    throw ConfigError("sliding window: need 1 <= F_slide < F_window");
  }
  if (prompts.frames < window) {
    throw ContractError("sliding window: prompt track (" + std::to_string(prompts.frames) +
                        " frames) is shorter than one window (" + std::to_string(window) + ")");
  }
  if (options.history_t < 0 || options.history_t > schedule.steps) {
    throw RangeError("sliding window: T_history outside [0, T]");
  }
  const std::size_t dims = denoiser.dims();
  const std::size_t total = prompts.frames;
  const std::size_t history = window - slide;
  const auto grid = timestep_grid(schedule.steps, options.sampler.steps);

  Matrix out(total, dims);
  if (initial_window != nullptr) {
    if (initial_window->rows() != window || initial_window->cols() != dims) {
      throw DimensionError("sliding window: initial window must be F_window x D");
    }
    out.set_row_block(0, *initial_window);
  } else {
    out.set_row_block(0, denoise_window(denoiser, prompts.slice(0, window), schedule,
                                        options.sampler, rng, 0));
  }

  const Rng history_rng = rng.split(stream::kHistoryNoise);
  std::size_t done = window;
  for (std::size_t slide_index = 0; done < total; ++slide_index) {
    const std::size_t fresh = std::min(slide, total - done);
    const std::size_t start = done - history;
    const std::size_t len = history + fresh;

    const Matrix hist_eps = rows_of(history_rng.split(slide_index), start, history, dims);
    const LatentSequence hist = add_noise(out.row_block(start, history),
                                          TimestepVector::uniform(history, options.history_t),
                                          hist_eps, schedule);
    LatentSequence z{Matrix(len, dims), TimestepVector::uniform(len, schedule.steps)};
    z.latents.set_row_block(0, hist.latents);
    z.latents.set_row_block(history, initial_noise(rng, done, fresh, dims));
    for (std::size_t r = 0; r < history; ++r) {
      z.timesteps[r] = options.history_t;
    }
    const PromptTrack local_prompts = prompts.slice(start, len);

    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
      const Matrix x0 = denoiser.predict_x0(z, local_prompts);
      TimestepVector next = z.timesteps;
      for (std::size_t r = history; r < len; ++r) {
        next[r] = grid[i + 1];
      }
      if (options.sampler.eta > 0.0) {
        Matrix noise(len, dims);
        noise.set_row_block(history, step_noise(rng, i, done, fresh, dims));
        z = sampler_step(z, x0, next, schedule, options.sampler.eta, &noise);
      } else {
        z = sampler_step(z, x0, next, schedule, 0.0);
      }
    }
    out.set_row_block(done, z.latents.row_block(history, fresh));
    done += fresh;
  }
  return LatentSequence{std::move(out), TimestepVector::uniform(total, 0)};
}

std::vector<int> fifo_levels(int steps, std::size_t window) {
  if (window < 1 || static_cast<std::size_t>(steps) < window) {
    throw ConfigError("fifo: need 1 <= F_window <= T for strictly increasing levels");
  }
  std::vector<int> levels(window);
  for (std::size_t k = 0; k < window; ++k) {
    levels[k] = static_cast<int>(std::lround(static_cast<double>(k + 1) * steps /
                                             static_cast<double>(window)));
  }
  return levels;
}

LatentSequence fifo_generate(const Denoiser& denoiser, const PromptTrack& prompts,
                             std::size_t total_frames, const NoiseSchedule& schedule,
                             const Rng& rng, const FifoOptions& options) {
  const std::size_t window = options.window;
  if (total_frames < window) {
    throw ContractError("fifo: total_frames must be >= F_window");
  }
  if (prompts.frames < total_frames) {
    throw ContractError("fifo: prompts exhausted: " + std::to_string(prompts.frames) +
                        " prompt blocks for " + std::to_string(total_frames) + " frames");
  }
  if (prompts.frames != total_frames) {
    throw ContractError("fifo: prompt track must have exactly total_frames blocks");
  }
  const std::size_t dims = denoiser.dims();
  const Matrix warm = denoise_window(denoiser, prompts.slice(0, window), schedule,
                                     options.sampler, rng, 0);
  if (total_frames == window) {
    return LatentSequence{warm, TimestepVector::uniform(window, 0)};
  }

  const auto levels = fifo_levels(schedule.steps, window);
  const Rng queue_rng = rng.split(stream::kFifoRenoise);
  const Matrix renoise_eps = rows_of(queue_rng, 0, window, dims);
  LatentSequence queue = add_noise(warm, TimestepVector(levels), renoise_eps, schedule);
  std::size_t head = 0;         // absolute frame index of slot 0
  std::size_t next_prompt = window;
  Matrix out(total_frames, dims);

  for (std::size_t step = 0; head < total_frames; ++step) {
    const std::size_t slots = queue.frames();
    const PromptTrack local_prompts = prompts.slice(head, slots);
    const Matrix x0 = denoiser.predict_x0(queue, local_prompts);
    TimestepVector next{std::vector<int>(slots)};
    next[0] = 0;
    for (std::size_t k = 1; k < slots; ++k) {
      next[k] = levels[k - 1];
    }
    LatentSequence moved;
    if (options.sampler.eta > 0.0) {
      const Matrix noise = rows_of(queue_rng.split(stream::kStepNoise).split(step), head, slots, dims);
      moved = sampler_step(queue, x0, next, schedule, options.sampler.eta, &noise);
    } else {
      moved = sampler_step(queue, x0, next, schedule, 0.0);
    }

    FifoStep info;
    info.index = step;
    info.emitted_frame = head;
    info.emitted_t = moved.timesteps[0];
    info.queue_before = queue.timesteps.values;
    out.set_row_block(head, moved.latents.row_block(0, 1));

    // Dequeue the head; enqueue fresh noise at T while prompts remain.
    const bool enqueue = next_prompt < total_frames;
    const std::size_t kept = slots - 1;
    LatentSequence rest{Matrix(kept + (enqueue ? 1 : 0), dims),
                        TimestepVector(std::vector<int>(kept + (enqueue ? 1 : 0)))};
    if (kept > 0) {
      rest.latents.set_row_block(0, moved.latents.row_block(1, kept));
      for (std::size_t k = 0; k < kept; ++k) {
        rest.timesteps[k] = moved.timesteps[k + 1];
      }
    }
    if (enqueue) {
      rest.latents.set_row_block(kept, initial_noise(rng, next_prompt, 1, dims));
      rest.timesteps[kept] = levels[window - 1];
      ++next_prompt;
    }
    queue = std::move(rest);
    ++head;
    info.queue_after = queue.timesteps.values;
    if (options.observer) {
      options.observer(info);
    }
  }
  return LatentSequence{std::move(out), TimestepVector::uniform(total_frames, 0)};
}

}  // namespace driftless
