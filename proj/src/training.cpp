#include "driftless/training.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "driftless/errors.hpp"
#include "driftless/kernels.hpp"

namespace driftless {

void TrainConfig::validate() const {
  if (batch < 1) {
    throw ConfigError("train: batch must be >= 1");
  }
  if (!(p_iid >= 0.0 && p_iid <= 1.0)) {
    throw ConfigError("train: p_iid must lie in [0, 1]");
  }
  if (!(global_fraction >= 0.0 && global_fraction <= 1.0)) {
    throw ConfigError("train: global_fraction must lie in [0, 1]");
  }
  if (s_max < 0) {
    throw ConfigError("train: s_max must be >= 0");
  }
  if (!(learning_rate >= 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) ||
      !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw ConfigError("train: invalid optimizer settings");
  }
  if (smoothing < 1) {
    throw ConfigError("train: smoothing window must be >= 1");
  }
}

WindowSampler::WindowSampler(const World& world, std::vector<Clip> clips, std::size_t window,
                             double global_fraction)
    : world_(world), clips_(std::move(clips)), window_(window), global_fraction_(global_fraction) {
  if (clips_.empty()) {
    throw ContractError("WindowSampler: no clips");
  }
  for (const auto& c : clips_) {
    if (c.latents.rows() < window_) {
      throw ContractError("WindowSampler: clip shorter than the training window");
    }
  }
}

TrainSample WindowSampler::next(Rng& rng) const {
  const auto& clip =
      clips_[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(clips_.size()) - 1))];
  const auto start = static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(clip.latents.rows() - window_)));
  SceneScript part;
  part.scene_of.assign(clip.script.scene_of.begin() + static_cast<std::ptrdiff_t>(start),
                       clip.script.scene_of.begin() + static_cast<std::ptrdiff_t>(start + window_));
  part.phase.assign(clip.script.phase.begin() + static_cast<std::ptrdiff_t>(start),
                    clip.script.phase.begin() + static_cast<std::ptrdiff_t>(start + window_));
  part.captions.assign(clip.script.captions.begin() + static_cast<std::ptrdiff_t>(start),
                       clip.script.captions.begin() + static_cast<std::ptrdiff_t>(start + window_));
  TrainSample sample;
  sample.z0 = clip.latents.row_block(start, window_);
  const auto embed = world_.conditioning_embedder();
  if (rng.uniform() < global_fraction_) {
    sample.prompts = replicate_global_prompt(World::global_caption(part), window_, embed, 1);
  } else {
    sample.prompts = build_prompt_track(CaptionDocument{part.captions}, embed, 1);
  }
  return sample;
}

DfDraw draw_df_noise(const Matrix& z0, const NoiseSchedule& schedule, int s_max, double p_iid,
                     Rng& rng) {
  const bool iid = rng.uniform() < p_iid;
  const int step_size = static_cast<int>(rng.uniform_int(0, s_max));
  const TimestepVector t = sample_df_timesteps(
      z0.rows(), schedule.steps, step_size, iid ? TimestepMode::kIid : TimestepMode::kRamp, rng);
  Matrix eps(z0.rows(), z0.cols());
  rng.fill_normal(eps.data());
  return DfDraw{add_noise(z0, t, eps, schedule)};
}

namespace {

void check_batch(const DenoiserConfig& config, const std::vector<TrainSample>& batch,
                 const std::vector<DfDraw>& draws) {
  if (batch.empty() || batch.size() != draws.size()) {
    throw ContractError("df_loss: batch and noise draws must be non-empty and aligned");
  }
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].z0.rows() != config.window || draws[b].noisy.frames() != config.window) {
      throw ContractError("df_loss: sample " + std::to_string(b) + " has " +
                          std::to_string(batch[b].z0.rows()) + " frames, window is " +
                          std::to_string(config.window));
    }
  }
}

}  // namespace

Var df_loss(Tape& tape, const std::vector<Var>& params, const DenoiserConfig& config,
            const std::vector<TrainSample>& batch, const std::vector<DfDraw>& draws) {
  check_batch(config, batch, draws);
  Var total{};
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Var pred = dit_forward(tape, params, config, draws[b].noisy, batch[b].prompts);
    const Var err = tape.mean_squared_error(pred, tape.constant(batch[b].z0));
    total = b == 0 ? err : tape.add(total, err);
  }
  return tape.scale(total, 1.0 / static_cast<double>(batch.size()));
}

double df_loss_value(const Denoiser& denoiser, const std::vector<TrainSample>& batch,
                     const std::vector<DfDraw>& draws) {
  if (batch.empty() || batch.size() != draws.size()) {
    throw ContractError("df_loss: batch and noise draws must be non-empty and aligned");
  }
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Matrix pred = denoiser.predict_x0(draws[b].noisy, batch[b].prompts);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = pred.data()[i] - batch[b].z0.data()[i];
      s += d * d;
    }
    total += s / static_cast<double>(pred.size());
  }
  return total / static_cast<double>(batch.size());
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::vector<Matrix>& params, const std::vector<Matrix>& grads) {
  if (params.size() != grads.size()) {
    throw DimensionError("Adam: parameter and gradient lists differ in length");
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.rows(), p.cols());
      v_.emplace_back(p.rows(), p.cols());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size()) {
      throw DimensionError("Adam: gradient shape differs from parameter shape");
    }
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      p[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

TrainResult train(const TrainConfig& config, const DenoiserConfig& model, DenoiserWeights init,
                  const WindowSampler& data, const NoiseSchedule& schedule,
                  const std::function<void(const TrainRecord&)>& on_record) {
  config.validate();
  model.validate();
  if (data.window() != model.window) {
    throw ContractError("train: sampler window differs from the model window");
  }
  DitDenoiser(model, init);  // shape check
  TrainResult result{std::move(init), {}};
  Adam adam(config.learning_rate, config.beta1, config.beta2, config.adam_eps);
  const Rng root(config.seed);
  const auto started = std::chrono::steady_clock::now();
  const std::size_t batch = config.batch;

  for (std::size_t it = 1; it <= config.iterations; ++it) {
    const Rng it_rng = root.split(it);
    std::vector<TrainSample> samples;
    std::vector<DfDraw> draws;
    for (std::size_t b = 0; b < batch; ++b) {
      Rng r = it_rng.split(b);
      samples.push_back(data.next(r));
      draws.push_back(draw_df_noise(samples.back().z0, schedule, config.s_max, config.p_iid, r));
    }

    std::vector<double> losses(batch);
    std::vector<std::vector<Matrix>> grads(batch);
    std::vector<std::exception_ptr> errors(batch);
    const auto& weights = result.weights;
#pragma omp parallel for schedule(static) num_threads(kernels::thread_budget())
    for (std::size_t b = 0; b < batch; ++b) {
      try {
        Tape tape;
        const auto params = register_parameters(tape, weights);
        const Var loss = df_loss(tape, params, model, {samples[b]}, {draws[b]});
        tape.backward(loss);
        losses[b] = tape.scalar(loss);
        for (const Var p : params) {
          grads[b].push_back(tape.grad(p));
        }
      } catch (...) {
        errors[b] = std::current_exception();
      }
    }
    for (const auto& e : errors) {
      if (e) {
        std::rethrow_exception(e);
      }
    }

    // Fixed-order reduction over samples.
    const double inv = 1.0 / static_cast<double>(batch);
    std::vector<Matrix> total = std::move(grads[0]);
    double loss = losses[0];
    for (std::size_t b = 1; b < batch; ++b) {
      loss += losses[b];
      for (std::size_t i = 0; i < total.size(); ++i) {
        auto dst = total[i].data();
        const auto src = grads[b][i].data();
        for (std::size_t j = 0; j < dst.size(); ++j) {
          dst[j] += src[j];
        }
      }
    }
    loss *= inv;
    double norm2 = 0.0;
    for (auto& g : total) {
      for (double& x : g.data()) {
        x *= inv;
        norm2 += x * x;
      }
    }

    TrainRecord record{it, loss, std::sqrt(norm2),
                       std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                           .count()};
    result.log.push_back(record);
    if (on_record) {
      on_record(record);
    }
    if (!std::isfinite(record.loss) || !std::isfinite(record.grad_norm)) {
      std::ostringstream msg;
      msg << "training diverged at iteration " << it << ": loss=" << record.loss
          << " grad_norm=" << record.grad_norm;
      throw DivergenceError(msg.str());
    }
    adam.step(result.weights.values, total);
  }
  return result;
}

std::vector<double> smoothed_loss(const std::vector<TrainRecord>& log, std::size_t window) {
  std::vector<double> out(log.size());
  double running = 0.0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    running += log[i].loss;
    if (i >= window) {
      running -= log[i - window].loss;
    }
    out[i] = running / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

void write_train_log(const std::filesystem::path& path, const std::vector<TrainRecord>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  out << "iteration,loss,grad_norm,wall_time\n" << std::setprecision(17);
  for (const auto& r : log) {
    out << r.iteration << ',' << r.loss << ',' << r.grad_norm << ',' << std::setprecision(6)
        << r.wall_time << std::setprecision(17) << '\n';
  }
}

}  // namespace driftless
