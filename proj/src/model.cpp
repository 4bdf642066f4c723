#include "driftless/model.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "driftless/container.hpp"
#include "driftless/errors.hpp"

namespace driftless {

namespace {

struct ParamSpec {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  enum class Init { kNormal, kZero, kOne } init;
};

std::vector<ParamSpec> parameter_layout(const DenoiserConfig& c) {
  using I = ParamSpec::Init;
  const std::size_t h = c.hidden;
  std::vector<ParamSpec> specs = {
      {"in.w", c.dims, h, I::kNormal},          {"in.b", 1, h, I::kZero},
      {"time.w1", c.time_features, h, I::kNormal}, {"time.b1", 1, h, I::kZero},
      {"time.w2", h, h, I::kNormal},            {"time.b2", 1, h, I::kZero},
  };
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    const std::vector<ParamSpec> layer = {
        {p + "ln1.g", 1, h, I::kOne},         {p + "ln1.b", 1, h, I::kZero},
        {p + "self.wq", h, h, I::kNormal},    {p + "self.wk", h, h, I::kNormal},
        {p + "self.wv", h, h, I::kNormal},    {p + "self.wo", h, h, I::kNormal},
        {p + "ln2.g", 1, h, I::kOne},         {p + "ln2.b", 1, h, I::kZero},
        {p + "cross.wq", h, h, I::kNormal},   {p + "cross.wk", c.text_dims, h, I::kNormal},
        {p + "cross.wv", c.text_dims, h, I::kNormal}, {p + "cross.wo", h, h, I::kNormal},
        {p + "ln3.g", 1, h, I::kOne},         {p + "ln3.b", 1, h, I::kZero},
        {p + "mlp.w1", h, c.mlp, I::kNormal}, {p + "mlp.b1", 1, c.mlp, I::kZero},
        {p + "mlp.w2", c.mlp, h, I::kNormal}, {p + "mlp.b2", 1, h, I::kZero},
    };
    specs.insert(specs.end(), layer.begin(), layer.end());
  }
  specs.push_back({"out.ln.g", 1, h, I::kOne});
  specs.push_back({"out.ln.b", 1, h, I::kZero});
  specs.push_back({"out.w", h, c.dims, I::kZero});
  specs.push_back({"out.b", 1, c.dims, I::kZero});
  return specs;
}

Matrix sinusoid(std::size_t rows, std::size_t width, const std::vector<double>& positions) {
  Matrix m(rows, width);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < width; ++i) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double angle = positions[r] * freq;
      m(r, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return m;
}

}  // namespace

void DenoiserConfig::validate() const {
  if (dims == 0 || text_dims == 0 || text_tokens == 0 || hidden == 0 || mlp == 0 ||
      time_features == 0) {
    throw ConfigError("model: widths must be positive");
  }
  if (heads == 0 || hidden % heads != 0) {
    throw ConfigError("model: heads must divide hidden");
  }
  if (window < 1) {
    throw ConfigError("model: window must be >= 1");
  }
  if (steps < 2) {
    throw ConfigError("model: steps must be >= 2");
  }
  if (!(ln_eps > 0.0)) {
    throw ConfigError("model: ln_eps must be positive");
  }
}

const Matrix& DenoiserWeights::get(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) {
      return values[i];
    }
  }
  throw ContractError("no parameter named " + name);
}

std::size_t DenoiserWeights::count() const noexcept {
  return std::accumulate(values.begin(), values.end(), std::size_t{0},
                         [](std::size_t n, const Matrix& m) { return n + m.size(); });
}

DenoiserWeights init_weights(const DenoiserConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  DenoiserWeights w;
  for (const auto& spec : parameter_layout(config)) {
    Matrix m(spec.rows, spec.cols);
    if (spec.init == ParamSpec::Init::kOne) {
      m = Matrix(spec.rows, spec.cols, 1.0);
    } else if (spec.init == ParamSpec::Init::kNormal) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(spec.rows));
      for (double& x : m.data()) {
        x = scale * rng.normal();
      }
    }
    w.names.push_back(spec.name);
    w.values.push_back(std::move(m));
  }
  return w;
}

Matrix frame_level_cross_attention(const Matrix& queries, const PromptTrack& prompts,
                                   const Matrix& w_q, const Matrix& w_k, const Matrix& w_v) {
  if (prompts.frames != queries.rows()) {
    throw DimensionError("cross-attention: " + std::to_string(queries.rows()) +
                         " queries but " + std::to_string(prompts.frames) + " prompt blocks");
  }
  if (w_q.rows() != queries.cols() || w_k.rows() != prompts.width ||
      w_v.rows() != prompts.width || w_k.cols() != w_q.cols()) {
    throw DimensionError("cross-attention: projection shapes do not match");
  }
  const Matrix q = matmul(queries, w_q);
  const double scale = 1.0 / std::sqrt(static_cast<double>(w_q.cols()));
  Matrix out(queries.rows(), w_v.cols());
  for (std::size_t f = 0; f < queries.rows(); ++f) {
    const Matrix c = prompts.block(f);
    const Matrix k = matmul(c, w_k);
    const Matrix v = matmul(c, w_v);
    Matrix scores = matmul(q.row_block(f, 1), transpose(k));
    for (double& s : scores.data()) {
      s *= scale;
    }
    out.set_row_block(f, matmul(softmax_rows(scores), v));
  }
  return out;
}

std::vector<Var> register_parameters(Tape& tape, const DenoiserWeights& weights) {
  std::vector<Var> vars;
  vars.reserve(weights.values.size());
  for (std::size_t i = 0; i < weights.values.size(); ++i) {
    vars.push_back(tape.parameter(weights.names[i], weights.values[i]));
  }
  return vars;
}

Var dit_forward(Tape& tape, const std::vector<Var>& params, const DenoiserConfig& config,
                const LatentSequence& z, const PromptTrack& prompts) {
  const std::size_t frames = z.frames();
  if (frames == 0) {
    throw DimensionError("dit_forward: empty input");
  }
  if (z.dims() != config.dims) {
    throw DimensionError("dit_forward: latent width " + std::to_string(z.dims()) +
                         ", model expects " + std::to_string(config.dims));
  }
  if (z.timesteps.size() != frames) {
    throw DimensionError("dit_forward: timestep vector length differs from frame count");
  }
  if (prompts.frames != frames || prompts.tokens != config.text_tokens ||
      prompts.width != config.text_dims) {
    throw DimensionError("dit_forward: prompt track shape does not match the input");
  }
  const auto layout = parameter_layout(config);
  if (params.size() != layout.size()) {
    throw ContractError("dit_forward: parameter list does not match the configuration");
  }
  std::unordered_map<std::string, Var> p;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    p.emplace(layout[i].name, params[i]);
  }
  const auto linear = [&](Var x, const std::string& w) { return tape.matmul(x, p.at(w)); };
  const auto affine = [&](Var x, const std::string& w, const std::string& b) {
    return tape.add_row(tape.matmul(x, p.at(w)), p.at(b));
  };
  const auto norm = [&](Var x, const std::string& prefix) {
    return tape.layer_norm(x, p.at(prefix + ".g"), p.at(prefix + ".b"), config.ln_eps);
  };

  std::vector<double> t_values(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    if (z.timesteps[f] < 0 || z.timesteps[f] > config.steps) {
      throw RangeError("dit_forward: timestep outside [0, T]");
    }
    t_values[f] = z.timesteps[f];
  }

  Var h = affine(tape.constant(z.latents), "in.w", "in.b");
  if (config.positional) {
    std::vector<double> pos(frames);
    std::iota(pos.begin(), pos.end(), 0.0);
    h = tape.add(h, tape.constant(sinusoid(frames, config.hidden, pos)));
  }
  const Var t_feat = tape.constant(sinusoid(frames, config.time_features, t_values));
  const Var t_emb = affine(tape.gelu(affine(t_feat, "time.w1", "time.b1")), "time.w2", "time.b2");
  h = tape.add(h, t_emb);

  const double scale = 1.0 / std::sqrt(static_cast<double>(config.hidden / config.heads));
  std::vector<std::size_t> all_rows;
  all_rows.reserve(frames * frames);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t g = 0; g < frames; ++g) {
      all_rows.push_back(g);
    }
  }
  const Var text = tape.constant(prompts.blocks);

  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    // Temporal self-attention: every frame sees every frame of the input.
    Var a = norm(h, pre + "ln1");
    const Var q = linear(a, pre + "self.wq");
    const Var k = tape.gather_rows(linear(a, pre + "self.wk"), all_rows);
    const Var v = tape.gather_rows(linear(a, pre + "self.wv"), all_rows);
    h = tape.add(h, linear(tape.block_attention(q, k, v, config.heads, frames, scale),
                           pre + "self.wo"));
    // Frame-level cross-attention: frame f sees only its own caption tokens.
    a = norm(h, pre + "ln2");
    const Var cq = linear(a, pre + "cross.wq");
    const Var ck = linear(text, pre + "cross.wk");
    const Var cv = linear(text, pre + "cross.wv");
    h = tape.add(h, linear(tape.block_attention(cq, ck, cv, config.heads, config.text_tokens,
                                                scale),
                           pre + "cross.wo"));
    a = norm(h, pre + "ln3");
    h = tape.add(h, affine(tape.gelu(affine(a, pre + "mlp.w1", pre + "mlp.b1")), pre + "mlp.w2",
                           pre + "mlp.b2"));
  }
  return affine(norm(h, "out.ln"), "out.w", "out.b");
}

DitDenoiser::DitDenoiser(DenoiserConfig config, DenoiserWeights weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
  config_.validate();
  const auto layout = parameter_layout(config_);
  if (layout.size() != weights_.values.size()) {
    throw ContractError("weights do not match the model configuration");
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].name != weights_.names[i] || layout[i].rows != weights_.values[i].rows() ||
        layout[i].cols != weights_.values[i].cols()) {
      throw ContractError("parameter " + weights_.names[i] + " does not match the configuration");
    }
    if (!all_finite(weights_.values[i])) {
      throw ContractError("parameter " + weights_.names[i] + " is not finite");
    }
  }
}

Matrix DitDenoiser::predict_x0(const LatentSequence& z, const PromptTrack& prompts) const {
  Tape tape;
  const auto params = register_parameters(tape, weights_);
  return tape.value(dit_forward(tape, params, config_, z, prompts));
}

double gaussian_posterior_mean(double z, double mu, double variance, double alpha_bar) {
  const double noise = 1.0 - alpha_bar;
  return (noise * mu + std::sqrt(alpha_bar) * variance * z) / (noise + alpha_bar * variance);
}

OracleDenoiser::OracleDenoiser(const World& world, const NoiseSchedule& schedule)
    : world_(world), schedule_(schedule) {}

Matrix OracleDenoiser::predict_x0(const LatentSequence& z, const PromptTrack& prompts) const {
  if (prompts.frames != z.frames() || z.timesteps.size() != z.frames()) {
    throw DimensionError("oracle: prompt track or timesteps do not match the input");
  }
  if (z.dims() != world_.dims()) {
    throw DimensionError("oracle: latent width does not match the world");
  }
  const double var_sem = world_.params().sigma * world_.params().sigma;
  const double var_id = var_sem + world_.params().identity_sigma * world_.params().identity_sigma;
  Matrix out(z.frames(), z.dims());
  for (std::size_t f = 0; f < z.frames(); ++f) {
    const int t = z.timesteps[f];
    const auto zf = z.latents.row(f);
    auto dst = out.row(f);
    if (t == 0) {
      std::copy(zf.begin(), zf.end(), dst.begin());
      continue;
    }
    const double ab = schedule_.alpha_bar(t);
    const auto meaning = world_.decode_condition(prompts.blocks.row(f * prompts.tokens));
    const auto mu = world_.frame_mean(meaning.scene, meaning.phase);
    const auto add_block = [&](const Matrix& basis, double variance) {
      for (std::size_t k = 0; k < basis.rows(); ++k) {
        const auto b = basis.row(k);
        double zc = 0.0;
        double mc = 0.0;
        for (std::size_t d = 0; d < b.size(); ++d) {
          zc += b[d] * zf[d];
          mc += b[d] * mu[d];
        }
        const double post = gaussian_posterior_mean(zc, mc, variance, ab);
        for (std::size_t d = 0; d < b.size(); ++d) {
          dst[d] += post * b[d];
        }
      }
    };
    add_block(world_.semantic_basis(), var_sem);
    add_block(world_.identity_basis(), var_id);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const DenoiserConfig& config,
                     const DenoiserWeights& weights) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  le::put_bytes(out, "DCKP");
  le::put_u32(out, kCheckpointVersion);
  for (std::size_t v : {config.dims, config.text_dims, config.text_tokens, config.layers,
                        config.heads, config.hidden, config.mlp, config.window,
                        static_cast<std::size_t>(config.steps), config.time_features,
                        static_cast<std::size_t>(config.positional)}) {
    le::put_u64(out, v);
  }
  le::put_f64(out, config.ln_eps);
  le::put_u64(out, weights.values.size());
  for (std::size_t i = 0; i < weights.values.size(); ++i) {
    le::put_u32(out, static_cast<std::uint32_t>(weights.names[i].size()));
    le::put_bytes(out, weights.names[i]);
    le::put_u64(out, weights.values[i].rows());
    le::put_u64(out, weights.values[i].cols());
    for (double x : weights.values[i].data()) {
      le::put_f64(out, x);
    }
  }
  if (!out) {
    throw FormatError("write failed for " + path.string());
  }
}

std::pair<DenoiserConfig, DenoiserWeights> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  if (le::get_bytes(in, 4) != "DCKP") {
    throw FormatError(path.string() + ": not a checkpoint");
  }
  if (const auto version = le::get_u32(in); version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  }
  DenoiserConfig c;
  c.dims = le::get_u64(in);
  c.text_dims = le::get_u64(in);
  c.text_tokens = le::get_u64(in);
  c.layers = le::get_u64(in);
  c.heads = le::get_u64(in);
  c.hidden = le::get_u64(in);
  c.mlp = le::get_u64(in);
  c.window = le::get_u64(in);
  c.steps = static_cast<int>(le::get_u64(in));
  c.time_features = le::get_u64(in);
  c.positional = le::get_u64(in) != 0;
  c.ln_eps = le::get_f64(in);
  c.validate();
  const auto count = le::get_u64(in);
  if (count > 100000) {
    throw FormatError(path.string() + ": implausible parameter count");
  }
  DenoiserWeights w;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = le::get_u32(in);
    if (len > 4096) {
      throw FormatError(path.string() + ": implausible parameter name");
    }
    w.names.push_back(le::get_bytes(in, len));
    const auto rows = le::get_u64(in);
    const auto cols = le::get_u64(in);
    if (rows * cols > (1ULL << 28)) {
      throw FormatError(path.string() + ": implausible parameter shape");
    }
    Matrix m(rows, cols);
    for (double& x : m.data()) {
      x = le::get_f64(in);
    }
    w.values.push_back(std::move(m));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path.string() + ": trailing bytes");
  }
  // Validates names and shapes against the stored configuration.
  DitDenoiser check(c, w);
  return {c, std::move(w)};
}

}  // namespace driftless
