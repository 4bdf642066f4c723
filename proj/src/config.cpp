#include "driftless/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "driftless/errors.hpp"
#include "driftless/inference.hpp"

namespace driftless {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

const char* kDefaults = R"(# driftless run configuration
run.seed = 2024

world.seed = 7
world.dims = 16
world.num_scenes = 8
world.drift_dims = 4
world.radius = 1.0
world.sigma = 0.1
world.dynamics_rate = 0.5
world.identity_sigma = 0.2
world.text_dims = 8

schedule.steps = 1000
schedule.beta_min = 0.0001
schedule.beta_max = 0.02
schedule.kind = linear

model.layers = 2
model.heads = 2
model.hidden = 64
model.mlp = 128
model.window = 21
model.time_features = 16
model.positional = true
model.text_tokens = 1

data.clips = 512
data.clip_frames = 42
data.min_scenes = 1
data.max_scenes = 2

train.iterations = 1500
train.batch = 16
train.learning_rate = 0.002
train.beta1 = 0.9
train.beta2 = 0.999
train.eps = 1e-8
train.s_max = 4
train.p_iid = 0.2
train.global_fraction = 0.2
train.smoothing = 50

inference.mode = pmwd
inference.prompt = frame
inference.frames = 126
inference.windows = 8
inference.slide = 15
inference.history_t = 0
inference.steps = 50
inference.eta = 0
inference.scenes = 6
inference.script = 0

eval.seeds = 10
eval.denom_floor = 1e-6
eval.eta = 1
)";

}  // namespace

Config Config::defaults() {
  Config c;
  // Seed the key set directly; merge_text rejects unknown keys.
  std::istringstream in(kDefaults);
  std::string line;
  while (std::getline(in, line)) {
    const auto body = trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) {
      continue;
    }
    const auto eq = body.find('=');
    c.values_[std::string(trim(body.substr(0, eq)))] = std::string(trim(body.substr(eq + 1)));
  }
  return c;
}

void Config::merge_text(std::string_view text, std::string_view origin) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) +
                        ": expected key = value");
    }
    try {
      set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

void Config::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override \"" + std::string(assignment) + "\" is not key=value");
  }
  set(std::string(trim(assignment.substr(0, eq))), std::string(trim(assignment.substr(eq + 1))));
}

void Config::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    throw ConfigError("unknown key \"" + key + "\"");
  }
  if (value.empty()) {
    throw ConfigError("empty value for \"" + key + "\"");
  }
  it->second = value;
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    throw ConfigError("unknown key \"" + key + "\"");
  }
  return it->second;
}

std::int64_t Config::get_int(const std::string& key) const {
  const std::string& s = get(key);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(key + ": \"" + s + "\" is not an integer");
  }
  return v;
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string& s = get(key);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(key + ": \"" + s + "\" is not a non-negative integer");
  }
  return v;
}

double Config::get_double(const std::string& key) const {
  const std::string& s = get(key);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(key + ": \"" + s + "\" is not a number");
  }
  return v;
}

bool Config::get_bool(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "true" || s == "1") {
    return true;
  }
  if (s == "false" || s == "0") {
    return false;
  }
  throw ConfigError(key + ": \"" + s + "\" is not a boolean");
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k + " = " + v + "\n";
  }
  return out;
}

InferenceMode parse_inference_mode(std::string_view s) {
  if (s == "pmwd") return InferenceMode::kPmwd;
  if (s == "sliding") return InferenceMode::kSliding;
  if (s == "fifo") return InferenceMode::kFifo;
  throw ConfigError("inference.mode must be pmwd, sliding or fifo (got \"" + std::string(s) + "\")");
}

PromptMode parse_prompt_mode(std::string_view s) {
  if (s == "frame") return PromptMode::kFrame;
  if (s == "global") return PromptMode::kGlobal;
  throw ConfigError("inference.prompt must be frame or global (got \"" + std::string(s) + "\")");
}

std::string to_string(InferenceMode m) {
  switch (m) {
    case InferenceMode::kPmwd: return "pmwd";
    case InferenceMode::kSliding: return "sliding";
    case InferenceMode::kFifo: return "fifo";
  }
  return "?";
}

std::string to_string(PromptMode m) { return m == PromptMode::kFrame ? "frame" : "global"; }

std::uint64_t RunConfig::stage_seed(std::string_view stage) const {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (char c : stage) {
    h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  }
  return mix64(seed ^ mix64(h));
}

RunConfig resolve(const Config& c) {
  RunConfig r;
  r.source = c;
  r.seed = c.get_u64("run.seed");

  const auto count = [&](const std::string& key) {
    const auto v = c.get_int(key);
    if (v < 0) {
      throw ConfigError(key + " must be >= 0");
    }
    return static_cast<std::size_t>(v);
  };

  r.world.seed = c.get_u64("world.seed");
  r.world.dims = count("world.dims");
  r.world.num_scenes = count("world.num_scenes");
  r.world.drift_dims = count("world.drift_dims");
  r.world.radius = c.get_double("world.radius");
  r.world.sigma = c.get_double("world.sigma");
  r.world.dynamics_rate = c.get_double("world.dynamics_rate");
  r.world.identity_sigma = c.get_double("world.identity_sigma");
  r.world.text_dims = count("world.text_dims");
  World check_world(r.world);

  r.schedule.steps = static_cast<int>(c.get_int("schedule.steps"));
  r.schedule.beta_min = c.get_double("schedule.beta_min");
  r.schedule.beta_max = c.get_double("schedule.beta_max");
  const auto& kind = c.get("schedule.kind");
  if (kind == "linear") {
    r.schedule.kind = ScheduleKind::kLinear;
  } else if (kind == "cosine") {
    r.schedule.kind = ScheduleKind::kCosine;
  } else {
    throw ConfigError("schedule.kind must be linear or cosine");
  }
  build_schedule(r.schedule.steps, r.schedule.beta_min, r.schedule.beta_max, r.schedule.kind);

  r.model.dims = r.world.dims;
  r.model.text_dims = r.world.text_dims;
  r.model.text_tokens = count("model.text_tokens");
  if (r.model.text_tokens != 1) {
    throw ConfigError("model.text_tokens: the synthetic embedder produces one token per caption");
  }
  r.model.layers = count("model.layers");
  r.model.heads = count("model.heads");
  r.model.hidden = count("model.hidden");
  r.model.mlp = count("model.mlp");
  r.model.window = count("model.window");
  r.model.steps = r.schedule.steps;
  r.model.time_features = count("model.time_features");
  r.model.positional = c.get_bool("model.positional");
  r.model.validate();
  r.init_seed = r.stage_seed("init");

  r.data.clips = count("data.clips");
  r.data.clip_frames = count("data.clip_frames");
  r.data.min_scenes = count("data.min_scenes");
  r.data.max_scenes = count("data.max_scenes");
  if (r.data.clips < 1 || r.data.clip_frames < r.model.window) {
    throw ConfigError("data: need at least one clip of at least model.window frames");
  }
  if (r.data.min_scenes < 1 || r.data.min_scenes > r.data.max_scenes ||
      r.data.max_scenes > r.data.clip_frames) {
    throw ConfigError("data: need 1 <= min_scenes <= max_scenes <= clip_frames");
  }

  r.train.iterations = count("train.iterations");
  r.train.batch = count("train.batch");
  r.train.learning_rate = c.get_double("train.learning_rate");
  r.train.beta1 = c.get_double("train.beta1");
  r.train.beta2 = c.get_double("train.beta2");
  r.train.adam_eps = c.get_double("train.eps");
  r.train.s_max = static_cast<int>(c.get_int("train.s_max"));
  r.train.p_iid = c.get_double("train.p_iid");
  r.train.global_fraction = c.get_double("train.global_fraction");
  r.train.smoothing = count("train.smoothing");
  r.train.seed = r.stage_seed("train");
  r.train.validate();

  r.inference.mode = parse_inference_mode(c.get("inference.mode"));
  r.inference.prompt = parse_prompt_mode(c.get("inference.prompt"));
  r.inference.frames = count("inference.frames");
  r.inference.windows = count("inference.windows");
  r.inference.slide = count("inference.slide");
  r.inference.history_t = static_cast<int>(c.get_int("inference.history_t"));
  r.inference.steps = static_cast<int>(c.get_int("inference.steps"));
  r.inference.eta = c.get_double("inference.eta");
  r.inference.scenes = count("inference.scenes");
  r.inference.script = count("inference.script");
  if (r.inference.frames < r.model.window) {
    throw ConfigError("inference.frames must be >= model.window");
  }
  plan_windows(r.inference.frames, r.model.window, r.inference.windows);
  if (r.inference.slide < 1 || r.inference.slide >= r.model.window) {
    throw ConfigError("inference.slide must lie in [1, model.window)");
  }
  if (r.inference.history_t < 0 || r.inference.history_t > r.schedule.steps) {
    throw ConfigError("inference.history_t must lie in [0, schedule.steps]");
  }
  if (r.inference.steps < 1 || !(r.inference.eta >= 0.0)) {
    throw ConfigError("inference: need steps >= 1 and eta >= 0");
  }
  if (r.inference.scenes < 1 || r.inference.scenes > r.inference.frames) {
    throw ConfigError("inference.scenes must lie in [1, inference.frames]");
  }
  fifo_levels(r.schedule.steps, r.model.window);

  r.eval.seeds = count("eval.seeds");
  r.eval.denom_floor = c.get_double("eval.denom_floor");
  r.eval.eta = c.get_double("eval.eta");
  if (r.eval.seeds < 1 || !(r.eval.denom_floor > 0.0) || !(r.eval.eta >= 0.0)) {
    throw ConfigError("eval: need seeds >= 1, denom_floor > 0 and eta >= 0");
  }
  return r;
}

}  // namespace driftless
