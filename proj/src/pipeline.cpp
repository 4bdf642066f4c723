#include "driftless/pipeline.hpp"

#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "driftless/container.hpp"
#include "driftless/errors.hpp"
#include "driftless/kernels.hpp"
#include "driftless/plot.hpp"

namespace driftless {

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  out << std::setprecision(17);
  return out;
}

std::string arm_name(InferenceMode m, PromptMode p) { return to_string(m) + "-" + to_string(p); }

std::uint64_t noise_seed_for(const RunConfig& run, std::size_t script) {
  return mix64(run.stage_seed("infer") + script);
}

void write_metrics_header(std::ostream& out) {
  out << "script,mode,prompt,mean_cd,frame_consistency,global_similarity,drift_slope\n";
}

void write_metrics_row(std::ostream& out, const RunMetrics& m) {
  out << m.script << ',' << to_string(m.mode) << ',' << to_string(m.prompt) << ',' << m.mean_cd
      << ',' << m.frame_consistency << ',' << m.global_similarity << ',' << m.drift_slope << '\n';
}

SceneScript script_from_captions(const World& world, const CaptionDocument& doc) {
  SceneScript s;
  s.captions = doc.captions;
  for (const auto& c : doc.captions) {
    const auto m = world.parse_caption(c);
    s.scene_of.push_back(m.scene);
    s.phase.push_back(m.phase);
  }
  return s;
}

void note(const Progress& progress, const std::string& msg) {
  if (progress) {
    progress(msg);
  }
}

}  // namespace

NoiseSchedule make_schedule(const RunConfig& run) {
  return build_schedule(run.schedule.steps, run.schedule.beta_min, run.schedule.beta_max,
                        run.schedule.kind);
}

void write_run_config(const std::filesystem::path& dir, const RunConfig& run) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.txt", std::ios::binary);
  if (!out) {
    throw FormatError("cannot write " + (dir / "config.txt").string());
  }
  out << run.source.serialize();
}

SceneScript evaluation_script(const RunConfig& run, const World& world, std::size_t index) {
  Rng rng = Rng(run.stage_seed("eval")).split(index);
  return world.sample_script(run.inference.scenes, run.inference.frames, rng);
}

PromptTrack prompts_for(const World& world, const SceneScript& script, PromptMode mode) {
  const auto embed = world.conditioning_embedder();
  if (mode == PromptMode::kFrame) {
    return build_prompt_track(CaptionDocument{script.captions}, embed, 1);
  }
  return replicate_global_prompt(World::global_caption(script), script.frames(), embed, 1);
}

Matrix generate(const RunConfig& run, const Denoiser& denoiser, const NoiseSchedule& schedule,
                const PromptTrack& prompts, InferenceMode mode, std::uint64_t noise_seed) {
  const Rng rng(noise_seed);
  const SamplerOptions sampler{run.inference.steps, run.inference.eta};
  const std::size_t window = run.model.window;
  switch (mode) {
    case InferenceMode::kPmwd: {
      const auto plan = plan_windows(prompts.frames, window, run.inference.windows);
      PmwdOptions options;
      options.sampler = sampler;
      return pmwd_generate(denoiser, plan, prompts, schedule, rng, options).latents;
    }
    case InferenceMode::kSliding: {
      SlidingOptions options{sampler, window, run.inference.slide, run.inference.history_t};
      return sliding_window_generate(denoiser, prompts, schedule, rng, options).latents;
    }
    case InferenceMode::kFifo: {
      FifoOptions options;
      options.sampler = sampler;
      options.window = window;
      return fifo_generate(denoiser, prompts, prompts.frames, schedule, rng, options).latents;
    }
  }
  throw ContractError("unknown inference mode");
}

RunMetrics evaluate_video(const RunConfig& run, const World& world, const SceneScript& script,
                          const Matrix& video) {
  const auto embeds = ground_truth_embedders(world);
  const PromptTrack frame_prompts = prompts_for(world, script, PromptMode::kFrame);
  RunMetrics m;
  m.mean_cd = confusion_degree(frame_prompts, video, embeds, run.eval.denom_floor).mean_cd;
  m.frame_consistency = frame_consistency(frame_prompts, video, embeds);
  m.global_similarity = global_similarity(World::global_caption(script), video, embeds);
  const auto drift = drift_profile(video, world.conditional_means(script));
  m.drift_slope = drift.slope;
  m.drift_errors = drift.errors;
  return m;
}

std::vector<Arm> benchmark_arms() {
  return {{InferenceMode::kPmwd, PromptMode::kFrame},
          {InferenceMode::kPmwd, PromptMode::kGlobal},
          {InferenceMode::kSliding, PromptMode::kFrame},
          {InferenceMode::kFifo, PromptMode::kFrame},
          {InferenceMode::kFifo, PromptMode::kGlobal}};
}

std::vector<RunMetrics> run_benchmark(const RunConfig& run, const World& world,
                                      const NoiseSchedule& schedule, const Denoiser& denoiser,
                                      const std::vector<Arm>& arms, const Progress& progress) {
  RunConfig bench = run;
  bench.inference.eta = run.eval.eta;
  std::vector<RunMetrics> results;
  for (std::size_t s = 0; s < run.eval.seeds; ++s) {
    const SceneScript script = evaluation_script(run, world, s);
    for (const auto& [mode, prompt] : arms) {
      const Matrix video = generate(bench, denoiser, schedule, prompts_for(world, script, prompt),
                                    mode, noise_seed_for(run, s));
      RunMetrics m = evaluate_video(run, world, script, video);
      m.script = s;
      m.mode = mode;
      m.prompt = prompt;
      note(progress, "script " + std::to_string(s) + " " + arm_name(mode, prompt) +
                         ": CD " + std::to_string(m.mean_cd));
      results.push_back(std::move(m));
    }
  }
  return results;
}

void gen_data_stage(const RunConfig& run, const std::filesystem::path& out,
                    const Progress& progress) {
  write_run_config(out, run);
  const World world(run.world);
  const std::uint64_t seed = run.stage_seed("data");
  const Rng scene_rng(run.stage_seed("data-scenes"));
  std::vector<Clip> clips(run.data.clips);
  std::vector<std::exception_ptr> errors(clips.size());
#pragma omp parallel for schedule(static) num_threads(kernels::thread_budget())
  for (std::size_t i = 0; i < clips.size(); ++i) {
    try {
      Rng r = scene_rng.split(i);
      const auto scenes = static_cast<std::size_t>(
          r.uniform_int(static_cast<std::int64_t>(run.data.min_scenes),
                        static_cast<std::int64_t>(run.data.max_scenes)));
      clips[i] = make_clip(world, scenes, run.data.clip_frames, seed, i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
  write_dataset(out, clips);
  note(progress, "wrote " + std::to_string(clips.size()) + " clips to " + out.string());
}

TrainResult train_stage(const RunConfig& run, const std::filesystem::path& dataset,
                        const std::filesystem::path& out, const Progress& progress) {
  write_run_config(out, run);
  const World world(run.world);
  const auto schedule = make_schedule(run);
  WindowSampler sampler(world, read_dataset(dataset, world), run.model.window,
                        run.train.global_fraction);
  std::ofstream log = open_csv(out / "train_log.csv");
  log << "iteration,loss,grad_norm,wall_time\n";
  const auto on_record = [&](const TrainRecord& r) {
    log << r.iteration << ',' << r.loss << ',' << r.grad_norm << ',' << std::setprecision(6)
        << r.wall_time << std::setprecision(17) << '\n';
    log.flush();
    if (r.iteration % 100 == 0) {
      note(progress, "iteration " + std::to_string(r.iteration) + " loss " +
                         std::to_string(r.loss));
    }
  };
  TrainResult result = train(run.train, run.model, init_weights(run.model, run.init_seed), sampler,
                             schedule, on_record);
  save_checkpoint(out / "checkpoint.dckp", run.model, result.weights);
  const auto smooth = smoothed_loss(result.log, run.train.smoothing);
  write_line_chart(out / "loss.svg", "Training loss (moving average)", "iteration", "x0 MSE",
                   {Series{"smoothed loss", smooth}});
  return result;
}

void infer_stage(const RunConfig& run, const std::filesystem::path& checkpoint,
                 const std::filesystem::path& out) {
  write_run_config(out, run);
  const World world(run.world);
  const auto schedule = make_schedule(run);
  auto [config, weights] = load_checkpoint(checkpoint);
  if (!(config == run.model)) {
    throw ConfigError("checkpoint model settings differ from the run config");
  }
  const DitDenoiser denoiser(config, std::move(weights));
  const SceneScript script = evaluation_script(run, world, run.inference.script);
  const PromptTrack prompts = prompts_for(world, script, run.inference.prompt);
  const Matrix video = generate(run, denoiser, schedule, prompts, run.inference.mode,
                                noise_seed_for(run, run.inference.script));
  write_latents(out / "video.dlat", video);
  write_caption_file(out / "captions.json", CaptionDocument{prompts.raw});
  write_caption_file(out / "script.json", CaptionDocument{script.captions});
}

RunMetrics eval_stage(const RunConfig& run, const std::filesystem::path& infer_dir,
                      const std::filesystem::path& out) {
  Config source = Config::defaults();
  source.merge_file(infer_dir / "config.txt");
  const RunConfig produced = resolve(source);
  write_run_config(out, run);
  const World world(produced.world);
  const Matrix video = read_latents(infer_dir / "video.dlat");
  const SceneScript script =
      script_from_captions(world, read_caption_file(infer_dir / "script.json", video.rows()));
  RunMetrics m = evaluate_video(run, world, script, video);
  m.script = produced.inference.script;
  m.mode = produced.inference.mode;
  m.prompt = produced.inference.prompt;

  std::ofstream metrics = open_csv(out / "metrics.csv");
  write_metrics_header(metrics);
  write_metrics_row(metrics, m);
  write_confusion_csv(out / "confusion.csv",
                      confusion_degree(prompts_for(world, script, PromptMode::kFrame), video,
                                       ground_truth_embedders(world), run.eval.denom_floor));
  std::ofstream drift = open_csv(out / "drift.csv");
  drift << "frame,error\n";
  for (std::size_t f = 0; f < m.drift_errors.size(); ++f) {
    drift << f << ',' << m.drift_errors[f] << '\n';
  }
  return m;
}

std::vector<RunMetrics> report_stage(const RunConfig& run, const std::filesystem::path& checkpoint,
                                     const std::filesystem::path& out, const Progress& progress) {
  write_run_config(out, run);
  const World world(run.world);
  const auto schedule = make_schedule(run);
  auto [config, weights] = load_checkpoint(checkpoint);
  if (!(config == run.model)) {
    throw ConfigError("checkpoint model settings differ from the run config");
  }
  const DitDenoiser denoiser(config, std::move(weights));
  const auto arms = benchmark_arms();
  const auto results = run_benchmark(run, world, schedule, denoiser, arms, progress);

  std::ofstream runs = open_csv(out / "runs.csv");
  write_metrics_header(runs);
  for (const auto& m : results) {
    write_metrics_row(runs, m);
  }

  struct Summary {
    double cd = 0, consistency = 0, similarity = 0, slope = 0;
    std::size_t positive_slopes = 0;
    std::vector<double> drift;
  };
  std::vector<Summary> sums(arms.size());
  const double n = static_cast<double>(run.eval.seeds);
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto& s = sums[i % arms.size()];
    const auto& m = results[i];
    s.cd += m.mean_cd / n;
    s.consistency += m.frame_consistency / n;
    s.similarity += m.global_similarity / n;
    s.slope += m.drift_slope / n;
    s.positive_slopes += m.drift_slope > 0.0 ? 1 : 0;
    if (s.drift.empty()) {
      s.drift.assign(m.drift_errors.size(), 0.0);
    }
    for (std::size_t f = 0; f < s.drift.size(); ++f) {
      s.drift[f] += m.drift_errors[f] / n;
    }
  }
  const auto index_of = [&](InferenceMode mode, PromptMode prompt) {
    for (std::size_t a = 0; a < arms.size(); ++a) {
      if (arms[a].first == mode && arms[a].second == prompt) {
        return a;
      }
    }
    throw ContractError("arm missing from the benchmark");
  };

  std::ofstream t1 = open_csv(out / "table1.csv");
  t1 << "setting,mean_cd,frame_consistency,global_similarity\n";
  for (const auto prompt : {PromptMode::kGlobal, PromptMode::kFrame}) {
    const auto& s = sums[index_of(InferenceMode::kPmwd, prompt)];
    t1 << (prompt == PromptMode::kGlobal ? "video-level prompt" : "frame-level prompt") << ','
       << s.cd << ',' << s.consistency << ',' << s.similarity << '\n';
  }

  std::ofstream t2 = open_csv(out / "table2.csv");
  t2 << "method,mean_cd,frame_consistency,global_similarity,mean_drift_slope,positive_slopes\n";
  std::vector<std::string> labels;
  std::vector<double> cds;
  std::vector<Series> drift_series;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    const auto& s = sums[a];
    const std::string name = arm_name(arms[a].first, arms[a].second);
    t2 << name << ',' << s.cd << ',' << s.consistency << ',' << s.similarity << ',' << s.slope
       << ',' << s.positive_slopes << '\n';
    labels.push_back(name);
    cds.push_back(s.cd);
    if (arms[a].second == PromptMode::kFrame) {
      drift_series.push_back(Series{name, s.drift});
    }
  }
  write_bar_chart(out / "cd_bars.svg", "Mean Confusion Degree", "CD", labels, cds);
  write_line_chart(out / "drift.svg", "Per-frame error against ground truth", "frame",
                   "squared error (mean over scripts)", drift_series);
  return results;
}

void full_pipeline(const RunConfig& run, const std::filesystem::path& out,
                   const Progress& progress) {
  gen_data_stage(run, out / "data", progress);
  train_stage(run, out / "data", out / "train", progress);
  const auto checkpoint = out / "train" / "checkpoint.dckp";
  const std::vector<Arm> arms = {{InferenceMode::kPmwd, PromptMode::kFrame},
                                 {InferenceMode::kSliding, PromptMode::kFrame},
                                 {InferenceMode::kFifo, PromptMode::kFrame},
                                 {InferenceMode::kFifo, PromptMode::kGlobal}};
  for (const auto& [mode, prompt] : arms) {
    Config c = run.source;
    c.set("inference.mode", to_string(mode));
    c.set("inference.prompt", to_string(prompt));
    const RunConfig arm_run = resolve(c);
    const std::string name = arm_name(mode, prompt);
    infer_stage(arm_run, checkpoint, out / ("infer-" + name));
    eval_stage(arm_run, out / ("infer-" + name), out / ("eval-" + name));
    note(progress, "inferred and evaluated " + name);
  }
  report_stage(run, checkpoint, out / "report", progress);
}

}  // namespace driftless
