// Command-line front end for the driftless lab.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "driftless/conditioning.hpp"
#include "driftless/config.hpp"
#include "driftless/errors.hpp"
#include "driftless/pipeline.hpp"

namespace fs = std::filesystem;
using namespace driftless;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
  cmd->add_option("--config", c.config_path, "settings file merged over the defaults")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "key=value override (repeatable)")->take_all();
  cmd->add_option("--seed", c.seed, "run seed (same as --set run.seed=N)");
  if (needs_out) {
    cmd->add_option("--out", c.out, "output directory")->required();
  }
}

RunConfig load_run(const Common& c) {
  Config cfg = Config::defaults();
  if (!c.config_path.empty()) {
    cfg.merge_file(c.config_path);
  }
  for (const auto& o : c.overrides) {
    cfg.apply_override(o);
  }
  if (c.seed) {
    cfg.set("run.seed", std::to_string(*c.seed));
  }
  return resolve(cfg);
}

void print_progress(const std::string& msg) { std::cerr << msg << '\n'; }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot read " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_metrics(const RunMetrics& m) {
  std::cout << "mean_cd " << m.mean_cd << "\nframe_consistency " << m.frame_consistency
            << "\nglobal_similarity " << m.global_similarity << "\ndrift_slope " << m.drift_slope
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driftless: frame-level prompt video diffusion lab"};
  app.require_subcommand(1);

  Common gen, tr, inf, ev, rep, all;
  std::string data_dir, checkpoint, infer_dir, report_checkpoint;

  auto* gen_cmd = app.add_subcommand("gen-data", "render the synthetic training set");
  add_common(gen_cmd, gen, true);

  auto* train_cmd = app.add_subcommand("train", "train the denoiser on a generated dataset");
  add_common(train_cmd, tr, true);
  train_cmd->add_option("--data", data_dir, "dataset directory from gen-data")
      ->required()
      ->check(CLI::ExistingDirectory);

  auto* infer_cmd = app.add_subcommand("infer", "generate one long video");
  add_common(infer_cmd, inf, true);
  infer_cmd->add_option("--checkpoint", checkpoint, "checkpoint from train")
      ->required()
      ->check(CLI::ExistingFile);

  auto* eval_cmd = app.add_subcommand("eval", "score a video written by infer");
  add_common(eval_cmd, ev, true);
  eval_cmd->add_option("--infer", infer_dir, "output directory of infer")
      ->required()
      ->check(CLI::ExistingDirectory);

  auto* report_cmd = app.add_subcommand("report", "run the benchmark and write tables and charts");
  add_common(report_cmd, rep, true);
  report_cmd->add_option("--checkpoint", report_checkpoint, "checkpoint from train")
      ->required()
      ->check(CLI::ExistingFile);

  auto* all_cmd = app.add_subcommand("run-all", "gen-data, train, infer, eval and report");
  add_common(all_cmd, all, true);

  std::string caption_file;
  std::size_t caption_frames = 0;
  auto* validate_cmd = app.add_subcommand("validate-captions", "check a frame-level caption file");
  validate_cmd->add_option("file", caption_file, "caption file")->required();
  validate_cmd->add_option("--frames", caption_frames, "expected number of captions")->required();

  std::string kind_name = "captioning";
  std::size_t prompt_count = 0;
  std::optional<std::string> global_prompt;
  std::string template_path;
  auto* render_cmd = app.add_subcommand("render-prompt", "print a filled-in system prompt");
  render_cmd->add_option("--kind", kind_name, "captioning or conversion")
      ->check(CLI::IsMember({"captioning", "conversion"}));
  render_cmd->add_option("--count", prompt_count, "number of frames or prompts")->required();
  render_cmd->add_option("--global", global_prompt, "video-level prompt (conversion)");
  render_cmd->add_option("--template", template_path, "template file instead of the built-in one")
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) {
      gen_data_stage(load_run(gen), gen.out, print_progress);
    } else if (*train_cmd) {
      const TrainResult r = train_stage(load_run(tr), data_dir, tr.out, print_progress);
      std::cout << "trained " << r.log.size() << " iterations, final loss " << r.log.back().loss
                << '\n';
    } else if (*infer_cmd) {
      infer_stage(load_run(inf), checkpoint, inf.out);
      std::cout << "wrote " << (fs::path(inf.out) / "video.dlat").string() << '\n';
    } else if (*eval_cmd) {
      print_metrics(eval_stage(load_run(ev), infer_dir, ev.out));
    } else if (*report_cmd) {
      report_stage(load_run(rep), report_checkpoint, rep.out, print_progress);
      std::cout << "wrote " << (fs::path(rep.out) / "table2.csv").string() << '\n';
    } else if (*all_cmd) {
      full_pipeline(load_run(all), all.out, print_progress);
      std::cout << "wrote " << (fs::path(all.out) / "report").string() << '\n';
    } else if (*validate_cmd) {
      const CaptionDocument doc = parse_caption_document(read_text(caption_file), caption_frames);
      std::cout << "ok: " << doc.frame_count() << " captions\n";
    } else if (*render_cmd) {
      const TemplateKind kind =
          kind_name == "conversion" ? TemplateKind::kConversion : TemplateKind::kCaptioning;
      const PromptTemplate tmpl = template_path.empty()
                                      ? load_builtin_template(DRIFTLESS_TEMPLATE_DIR, kind)
                                      : load_template(template_path, kind);
      std::cout << render_template(tmpl, prompt_count, global_prompt);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
