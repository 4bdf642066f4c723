#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "driftless/model.hpp"
#include "driftless/schedule.hpp"
#include "driftless/synthworld.hpp"
#include "driftless/training.hpp"

namespace driftless {

/// Flat "section.key = value" settings. Only keys present in the defaults are
/// accepted; '#' starts a comment.
class Config {
 public:
  static Config defaults();

  /// Applies every assignment in `text` on top of this config.
  void merge_text(std::string_view text, std::string_view origin = "config");
  void merge_file(const std::filesystem::path& path);
  /// "key=value" override as given to --set.
  void apply_override(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  [[nodiscard]] const std::string& get(const std::string& key) const;
  [[nodiscard]] std::int64_t get_int(const std::string& key) const;
  [[nodiscard]] std::uint64_t get_u64(const std::string& key) const;
  [[nodiscard]] double get_double(const std::string& key) const;
  [[nodiscard]] bool get_bool(const std::string& key) const;

  /// Sorted "key = value" lines; parsing it back yields the same config.
  [[nodiscard]] std::string serialize() const;
  [[nodiscard]] const std::map<std::string, std::string>& values() const noexcept {
    return values_;
  }

 private:
  std::map<std::string, std::string> values_;
};

enum class InferenceMode { kPmwd, kSliding, kFifo };
enum class PromptMode { kFrame, kGlobal };

InferenceMode parse_inference_mode(std::string_view s);
PromptMode parse_prompt_mode(std::string_view s);
std::string to_string(InferenceMode m);
std::string to_string(PromptMode m);

struct ScheduleSettings {
  int steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  ScheduleKind kind = ScheduleKind::kLinear;
};

struct DataSettings {
  std::size_t clips = 512;
  std::size_t clip_frames = 42;
  std::size_t min_scenes = 1;
  std::size_t max_scenes = 2;
};

struct InferenceSettings {
  InferenceMode mode = InferenceMode::kPmwd;
  PromptMode prompt = PromptMode::kFrame;
  std::size_t frames = 126;
  std::size_t windows = 8;   // K for PMWD
  std::size_t slide = 15;    // F_slide for sliding window
  int history_t = 0;
  int steps = 50;
  double eta = 0.0;
  std::size_t scenes = 6;
  std::size_t script = 0;    // which evaluation script to generate
};

struct EvalSettings {
  std::size_t seeds = 10;
  double denom_floor = 1e-6;
  double eta = 1.0;  // sampler eta for benchmark runs
};

/// Everything a run needs, resolved from a Config.
struct RunConfig {
  Config source;
  std::uint64_t seed = 0;
  WorldParams world;
  ScheduleSettings schedule;
  DenoiserConfig model;
  std::uint64_t init_seed = 0;
  TrainConfig train;
  DataSettings data;
  InferenceSettings inference;
  EvalSettings eval;

  /// Seed for a named stage, derived from the run seed.
  [[nodiscard]] std::uint64_t stage_seed(std::string_view stage) const;
};

/// Validates cross-field consistency (geometry, widths) and throws
/// ConfigError / GeometryError naming the first violation.
RunConfig resolve(const Config& config);

}  // namespace driftless
