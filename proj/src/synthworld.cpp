#include "driftless/synthworld.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "driftless/container.hpp"
#include "driftless/errors.hpp"

namespace driftless {

namespace {

constexpr double kPhaseQuantum = 1e-4;

const std::array<const char*, 4> kShotTags = {
    "Long Shot, Eye-Level", "Medium Shot, Eye-Level", "Close-Up, Low Angle",
    "Wide Shot, High Angle"};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i] * b[i];
  }
  return s;
}

std::vector<double> normalized(std::vector<double> v) {
  const double n = std::sqrt(dot(v, v));
  if (!(n > 1e-12)) {
    throw ContractError("cannot normalize a zero vector");
  }
  for (double& x : v) {
    x /= n;
  }
  return v;
}

// Rows of a seeded random orthogonal matrix (modified Gram-Schmidt).
Matrix random_orthonormal(std::size_t n, Rng& rng) {
  Matrix q(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = q.row(i);
    double norm = 0.0;
    while (!(norm > 1e-6)) {
      rng.fill_normal(row);
      for (std::size_t j = 0; j < i; ++j) {
        const double p = dot(row, q.row(j));
        for (std::size_t d = 0; d < n; ++d) {
          row[d] -= p * q(j, d);
        }
      }
      norm = std::sqrt(dot(row, row));
    }
    for (double& x : row) {
      x /= norm;
    }
  }
  return q;
}

double quantize_phase(double p) { return std::round(p / kPhaseQuantum) * kPhaseQuantum; }

std::size_t parse_index(std::string_view text, std::string_view what) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ParseError("bad " + std::string(what) + " \"" + std::string(text) + "\"");
  }
  return value;
}

// Splits "<body> [tag]" and validates the tag if present.
std::string_view strip_tag(std::string_view caption) {
  const auto open = caption.find(" [");
  if (open == std::string_view::npos) {
    return caption;
  }
  if (caption.back() != ']') {
    throw ParseError("unterminated shot tag in \"" + std::string(caption) + "\"");
  }
  return caption.substr(0, open);
}

}  // namespace

std::vector<std::size_t> SceneScript::scene_order() const {
  std::vector<std::size_t> order;
  for (std::size_t s : scene_of) {
    if (std::find(order.begin(), order.end(), s) == order.end()) {
      order.push_back(s);
    }
  }
  return order;
}

World::World(WorldParams params) : params_(params) {
  const auto& p = params_;
  if (p.num_scenes < 1 || p.num_scenes + p.drift_dims > p.dims) {
    throw ConfigError("world: need 1 <= num_scenes and num_scenes + drift_dims <= dims");
  }
  if (p.drift_dims < 1) {
    throw ConfigError("world: drift_dims must be >= 1");
  }
  if (!(p.sigma > 0.0) || !(p.radius > 0.0) || p.dynamics_rate < 0.0 || p.identity_sigma < 0.0) {
    throw ConfigError("world: need sigma > 0, radius > 0, dynamics_rate >= 0, identity_sigma >= 0");
  }
  if (p.text_dims < p.num_scenes) {
    throw ConfigError("world: text_dims must be >= num_scenes");
  }
  Rng rng(p.seed);
  Rng basis_rng = rng.split(1);
  const Matrix basis = random_orthonormal(p.dims, basis_rng);
  const std::size_t semantic = p.num_scenes + p.drift_dims;

  scene_means_ = Matrix(p.num_scenes, p.dims);
  for (std::size_t s = 0; s < p.num_scenes; ++s) {
    for (std::size_t d = 0; d < p.dims; ++d) {
      scene_means_(s, d) = p.radius * basis(s, d);
    }
  }
  semantic_basis_ = basis.row_block(0, semantic);
  identity_basis_ = basis.row_block(semantic, p.dims - semantic);

  Rng drift_rng = rng.split(2);
  drift_dirs_ = Matrix(p.num_scenes, p.dims);
  for (std::size_t s = 0; s < p.num_scenes; ++s) {
    std::vector<double> coeff(p.drift_dims);
    double norm = 0.0;
    while (!(norm > 1e-6)) {
      drift_rng.fill_normal(coeff);
      norm = std::sqrt(dot(coeff, coeff));
    }
    for (std::size_t k = 0; k < p.drift_dims; ++k) {
      for (std::size_t d = 0; d < p.dims; ++d) {
        drift_dirs_(s, d) += coeff[k] / norm * basis(p.num_scenes + k, d);
      }
    }
  }

  text_scene_ = Matrix(p.num_scenes, p.text_dims);
  for (std::size_t s = 0; s < p.num_scenes; ++s) {
    text_scene_(s, s) = 1.0;
  }
  text_phase_.assign(p.text_dims, 0.0);
  if (p.text_dims > p.num_scenes) {
    text_phase_[p.num_scenes] = 1.0;
  } else {
    for (std::size_t s = 0; s < p.num_scenes; ++s) {
      text_phase_[s] = 1.0 / std::sqrt(static_cast<double>(p.num_scenes));
    }
  }
}

std::span<const double> World::scene_mean(std::size_t scene) const {
  if (scene >= params_.num_scenes) {
    throw RangeError("scene " + std::to_string(scene) + " outside the world");
  }
  return scene_means_.row(scene);
}

std::span<const double> World::drift_direction(std::size_t scene) const {
  if (scene >= params_.num_scenes) {
    throw RangeError("scene " + std::to_string(scene) + " outside the world");
  }
  return drift_dirs_.row(scene);
}

std::vector<double> World::frame_mean(std::size_t scene, double phase) const {
  const auto mu = scene_mean(scene);
  const auto dir = drift_direction(scene);
  std::vector<double> out(params_.dims);
  for (std::size_t d = 0; d < out.size(); ++d) {
    out[d] = mu[d] + params_.dynamics_rate * phase * dir[d];
  }
  return out;
}

Matrix World::conditional_means(const SceneScript& script) const {
  Matrix m(script.frames(), params_.dims);
  for (std::size_t f = 0; f < script.frames(); ++f) {
    const auto mean = frame_mean(script.scene_of[f], script.phase[f]);
    std::copy(mean.begin(), mean.end(), m.row(f).begin());
  }
  return m;
}

SceneScript World::sample_script(std::size_t scenes_in_clip, std::size_t frames, Rng& rng) const {
  if (scenes_in_clip < 1 || scenes_in_clip > frames) {
    throw ContractError("sample_script: need 1 <= scenes <= frames (got " +
                        std::to_string(scenes_in_clip) + " scenes, " + std::to_string(frames) +
                        " frames)");
  }
  if (scenes_in_clip > 1 && params_.num_scenes < 2) {
    throw ContractError("sample_script: a one-scene world cannot change scenes");
  }
  // Boundaries: scenes_in_clip - 1 distinct cut points from {1..F-1}.
  std::vector<std::size_t> cuts(frames - 1);
  std::iota(cuts.begin(), cuts.end(), 1);
  for (std::size_t i = 0; i + 1 < scenes_in_clip; ++i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(cuts.size()) - 1));
    std::swap(cuts[i], cuts[j]);
  }
  std::vector<std::size_t> starts(cuts.begin(), cuts.begin() + (scenes_in_clip - 1));
  starts.push_back(0);
  std::sort(starts.begin(), starts.end());
  starts.push_back(frames);

  std::vector<std::size_t> ids;
  if (scenes_in_clip <= params_.num_scenes) {
    std::vector<std::size_t> pool(params_.num_scenes);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t i = 0; i < scenes_in_clip; ++i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(
          static_cast<std::int64_t>(i), static_cast<std::int64_t>(pool.size()) - 1));
      std::swap(pool[i], pool[j]);
      ids.push_back(pool[i]);
    }
  } else {
    for (std::size_t i = 0; i < scenes_in_clip; ++i) {
      std::size_t s = 0;
      if (i == 0) {
        s = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(params_.num_scenes) - 1));
      } else {
        s = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(params_.num_scenes) - 2));
        if (s >= ids.back()) {
          ++s;
        }
      }
      ids.push_back(s);
    }
  }

  SceneScript script;
  script.scene_of.resize(frames);
  script.phase.resize(frames);
  script.captions.resize(frames);
  for (std::size_t run = 0; run < scenes_in_clip; ++run) {
    const std::size_t begin = starts[run];
    const std::size_t len = starts[run + 1] - begin;
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t f = begin + i;
      script.scene_of[f] = ids[run];
      script.phase[f] =
          len > 1 ? quantize_phase(static_cast<double>(i) / static_cast<double>(len - 1)) : 0.0;
      script.captions[f] = caption(ids[run], script.phase[f]);
    }
  }
  return script;
}

Matrix World::render_latents(const SceneScript& script, Rng& rng) const {
  std::vector<double> identity(params_.dims, 0.0);
  for (std::size_t k = 0; k < identity_basis_.rows(); ++k) {
    const double g = params_.identity_sigma * rng.normal();
    for (std::size_t d = 0; d < params_.dims; ++d) {
      identity[d] += g * identity_basis_(k, d);
    }
  }
  Matrix out = conditional_means(script);
  for (std::size_t f = 0; f < out.rows(); ++f) {
    auto row = out.row(f);
    for (std::size_t d = 0; d < row.size(); ++d) {
      row[d] += identity[d] + params_.sigma * rng.normal();
    }
  }
  return out;
}

std::string World::caption(std::size_t scene, double phase) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", quantize_phase(phase));
  return "scene:" + std::to_string(scene) + " phase:" + buf + " [" +
         kShotTags[scene % kShotTags.size()] + "]";
}

std::string World::global_caption(const SceneScript& script) {
  std::string out = "scenes:";
  const auto order = script.scene_order();
  for (std::size_t i = 0; i < order.size(); ++i) {
    out += (i ? "," : "") + std::to_string(order[i]);
  }
  return out + " [" + kShotTags[0] + "]";
}

CaptionMeaning World::parse_caption(std::string_view caption) const {
  const std::string_view body = strip_tag(caption);
  constexpr std::string_view scene_key = "scene:";
  constexpr std::string_view phase_key = " phase:";
  const auto split = body.find(phase_key);
  if (!body.starts_with(scene_key) || split == std::string_view::npos) {
    throw ParseError("not a scene caption: \"" + std::string(caption) + "\"");
  }
  CaptionMeaning m;
  m.scene = parse_index(body.substr(scene_key.size(), split - scene_key.size()), "scene id");
  if (m.scene >= params_.num_scenes) {
    throw ParseError("scene " + std::to_string(m.scene) + " is not in this world");
  }
  const std::string_view phase_text = body.substr(split + phase_key.size());
  const auto* end = phase_text.data() + phase_text.size();
  const auto [ptr, ec] = std::from_chars(phase_text.data(), end, m.phase);
  if (ec != std::errc() || ptr != end || phase_text.empty() || m.phase < 0.0 || m.phase > 1.0) {
    throw ParseError("bad phase \"" + std::string(phase_text) + "\"");
  }
  return m;
}

std::vector<std::size_t> World::parse_global_caption(std::string_view caption) const {
  const std::string_view body = strip_tag(caption);
  constexpr std::string_view key = "scenes:";
  if (!body.starts_with(key)) {
    throw ParseError("not a global caption: \"" + std::string(caption) + "\"");
  }
  std::vector<std::size_t> scenes;
  std::string_view rest = body.substr(key.size());
  while (true) {
    const auto comma = rest.find(',');
    const std::size_t s = parse_index(rest.substr(0, comma), "scene id");
    if (s >= params_.num_scenes) {
      throw ParseError("scene " + std::to_string(s) + " is not in this world");
    }
    scenes.push_back(s);
    if (comma == std::string_view::npos) {
      break;
    }
    rest.remove_prefix(comma + 1);
  }
  return scenes;
}

Matrix World::condition_embedding(std::string_view caption) const {
  Matrix out(1, params_.text_dims);
  auto row = out.row(0);
  if (caption.starts_with("scenes:")) {
    for (std::size_t s : parse_global_caption(caption)) {
      for (std::size_t d = 0; d < row.size(); ++d) {
        row[d] += text_scene_(s, d);
      }
    }
    const auto unit = normalized({row.begin(), row.end()});
    std::copy(unit.begin(), unit.end(), row.begin());
    return out;
  }
  const auto m = parse_caption(caption);
  for (std::size_t d = 0; d < row.size(); ++d) {
    row[d] = text_scene_(m.scene, d) + m.phase * text_phase_[d];
  }
  return out;
}

TextEmbedder World::conditioning_embedder() const {
  return [this](std::string_view caption) { return condition_embedding(caption); };
}

CaptionMeaning World::decode_condition(std::span<const double> block) const {
  if (block.size() != params_.text_dims) {
    throw ContractError("decode_condition: block width mismatch");
  }
  std::size_t best = 0;
  for (std::size_t s = 1; s < params_.num_scenes; ++s) {
    if (dot(block, text_scene_.row(s)) > dot(block, text_scene_.row(best))) {
      best = s;
    }
  }
  std::vector<double> residual(block.begin(), block.end());
  for (std::size_t d = 0; d < residual.size(); ++d) {
    residual[d] -= text_scene_(best, d);
  }
  const double phase = dot(residual, text_phase_) / dot(text_phase_, text_phase_);
  double miss = 0.0;
  for (std::size_t d = 0; d < residual.size(); ++d) {
    const double r = residual[d] - phase * text_phase_[d];
    miss += r * r;
  }
  if (miss > 1e-18 || phase < -1e-12 || phase > 1.0 + 1e-12) {
    throw ContractError("prompt block is not a scene caption embedding of this world");
  }
  return CaptionMeaning{best, phase};
}

std::vector<double> World::text_embedding(std::string_view caption) const {
  if (caption.starts_with("scenes:")) {
    std::vector<double> sum(params_.dims, 0.0);
    for (std::size_t s : parse_global_caption(caption)) {
      const auto mu = scene_mean(s);
      for (std::size_t d = 0; d < sum.size(); ++d) {
        sum[d] += mu[d];
      }
    }
    return normalized(std::move(sum));
  }
  const auto m = parse_caption(caption);
  return normalized(frame_mean(m.scene, m.phase));
}

std::vector<double> World::frame_embedding(std::span<const double> latent) const {
  if (latent.size() != params_.dims) {
    throw DimensionError("frame_embedding: latent width mismatch");
  }
  std::vector<double> out(params_.dims, 0.0);
  for (std::size_t k = 0; k < semantic_basis_.rows(); ++k) {
    const auto b = semantic_basis_.row(k);
    const double c = dot(latent, b);
    for (std::size_t d = 0; d < out.size(); ++d) {
      out[d] += c * b[d];
    }
  }
  return normalized(std::move(out));
}

EmbeddingPair ground_truth_embedders(const World& world) {
  return EmbeddingPair{
      [&world](std::string_view caption) { return world.text_embedding(caption); },
      [&world](std::span<const double> latent) { return world.frame_embedding(latent); }};
}

Clip make_clip(const World& world, std::size_t scenes_in_clip, std::size_t frames,
               std::uint64_t seed, std::size_t index) {
  Rng rng = Rng(seed).split(index);
  Clip clip;
  clip.script = world.sample_script(scenes_in_clip, frames, rng);
  clip.latents = world.render_latents(clip.script, rng);
  return clip;
}

namespace {

std::string clip_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip_%05zu", i);
  return buf;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const std::vector<Clip>& clips) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "index.csv", std::ios::binary);
  if (!index) {
    throw FormatError("cannot write " + (dir / "index.csv").string());
  }
  index << "clip,frames,scenes\n";
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const std::string stem = clip_stem(i);
    write_latents(dir / (stem + ".dlat"), clips[i].latents);
    write_caption_file(dir / (stem + ".json"), CaptionDocument{clips[i].script.captions});
    index << stem << ',' << clips[i].script.frames() << ','
          << clips[i].script.scene_order().size() << '\n';
  }
}

std::vector<Clip> read_dataset(const std::filesystem::path& dir, const World& world) {
  std::ifstream index(dir / "index.csv");
  if (!index) {
    throw FormatError("cannot open " + (dir / "index.csv").string());
  }
  std::string line;
  std::getline(index, line);
  if (line != "clip,frames,scenes") {
    throw FormatError("dataset index has an unexpected header");
  }
  std::vector<Clip> clips;
  while (std::getline(index, line)) {
    if (line.empty()) {
      continue;
    }
    std::istringstream row(line);
    std::string stem;
    std::string frames_text;
    std::getline(row, stem, ',');
    std::getline(row, frames_text, ',');
    const std::size_t frames = parse_index(frames_text, "frame count");
    Clip clip;
    clip.latents = read_latents(dir / (stem + ".dlat"));
    if (clip.latents.rows() != frames || clip.latents.cols() != world.dims()) {
      throw FormatError(stem + ": latent shape does not match the index or world");
    }
    const auto doc = read_caption_file(dir / (stem + ".json"), frames);
    clip.script.captions = doc.captions;
    for (const auto& c : doc.captions) {
      const auto m = world.parse_caption(c);
      clip.script.scene_of.push_back(m.scene);
      clip.script.phase.push_back(m.phase);
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace driftless
