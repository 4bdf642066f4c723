#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "driftless/errors.hpp"
#include "driftless/grad_check.hpp"
#include "driftless/model.hpp"
#include "driftless/schedule.hpp"
#include "driftless/synthworld.hpp"
#include "support.hpp"

using namespace driftless;
using driftless::testing::random_matrix;

namespace {

PromptTrack random_track(std::size_t frames, std::size_t tokens, std::size_t width, Rng& rng) {
  PromptTrack p;
  p.frames = frames;
  p.tokens = tokens;
  p.width = width;
  p.blocks = random_matrix(frames * tokens, width, rng);
  return p;
}

DenoiserConfig tiny_config() {
  DenoiserConfig c;
  c.dims = 4;
  c.text_dims = 3;
  c.text_tokens = 2;
  c.layers = 1;
  c.heads = 2;
  c.hidden = 8;
  c.mlp = 8;
  c.window = 5;
  c.steps = 100;
  c.time_features = 4;
  return c;
}

// Same weights but with a random output head, so gradients reach every layer.
DenoiserWeights live_weights(const DenoiserConfig& c, std::uint64_t seed) {
  DenoiserWeights w = init_weights(c, seed);
  Rng rng(seed + 1);
  for (std::size_t i = 0; i < w.names.size(); ++i) {
    if (w.names[i] == "out.w" || w.names[i] == "out.b") {
      w.values[i] = random_matrix(w.values[i].rows(), w.values[i].cols(), rng, 0.5);
    }
  }
  return w;
}

LatentSequence random_input(const DenoiserConfig& c, std::size_t frames, Rng& rng) {
  LatentSequence z{random_matrix(frames, c.dims, rng), {}};
  for (std::size_t f = 0; f < frames; ++f) {
    z.timesteps.values.push_back(static_cast<int>(rng.uniform_int(0, c.steps)));
  }
  return z;
}

}  // namespace

TEST_CASE("single-token identity cross-attention returns the caption") {
  Rng rng(1);
  const PromptTrack p = random_track(6, 1, 1, rng);
  const Matrix queries = random_matrix(6, 1, rng);
  const Matrix id = Matrix::identity(1);
  const Matrix out = frame_level_cross_attention(queries, p, id, id, id);
  for (std::size_t f = 0; f < 6; ++f) {
    CHECK(out(f, 0) == p.blocks(f, 0));
  }
}

TEST_CASE("cross-attention is local to each frame's caption") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto frames = static_cast<std::size_t>(rng.uniform_int(2, 8));
    const auto tokens = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const std::size_t width = 3, d = 5;
    PromptTrack p = random_track(frames, tokens, width, rng);
    const Matrix q = random_matrix(frames, 4, rng);
    const Matrix wq = random_matrix(4, d, rng), wk = random_matrix(width, d, rng),
                 wv = random_matrix(width, 6, rng);
    const Matrix base = frame_level_cross_attention(q, p, wq, wk, wv);
    const auto g = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(frames) - 1));
    for (std::size_t t = 0; t < tokens; ++t) {
      for (std::size_t c = 0; c < width; ++c) {
        p.blocks(g * tokens + t, c) += rng.normal();
      }
    }
    const Matrix moved = frame_level_cross_attention(q, p, wq, wk, wv);
    for (std::size_t f = 0; f < frames; ++f) {
      if (f != g) {
        CHECK(moved.row_block(f, 1) == base.row_block(f, 1));
      }
    }
    CHECK(moved.row_block(g, 1) != base.row_block(g, 1));
  }
}

TEST_CASE("two frames with two tokens match a hand-expanded oracle") {
  Rng rng(3);
  const PromptTrack p = random_track(2, 2, 3, rng);
  const Matrix q = random_matrix(2, 4, rng);
  const Matrix wq = random_matrix(4, 2, rng), wk = random_matrix(3, 2, rng),
               wv = random_matrix(3, 3, rng);
  const Matrix out = frame_level_cross_attention(q, p, wq, wk, wv);
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  };
  auto project = [](std::span<const double> x, const Matrix& w) {
    std::vector<double> y(w.cols(), 0.0);
    for (std::size_t j = 0; j < w.cols(); ++j) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        y[j] += x[i] * w(i, j);
      }
    }
    return y;
  };
  for (std::size_t f = 0; f < 2; ++f) {
    const auto qf = project(q.row(f), wq);
    const auto k0 = project(p.blocks.row(2 * f), wk), k1 = project(p.blocks.row(2 * f + 1), wk);
    const auto v0 = project(p.blocks.row(2 * f), wv), v1 = project(p.blocks.row(2 * f + 1), wv);
    const double s0 = dot(qf, k0) / std::sqrt(2.0), s1 = dot(qf, k1) / std::sqrt(2.0);
    const double a0 = std::exp(s0) / (std::exp(s0) + std::exp(s1));
    const double a1 = std::exp(s1) / (std::exp(s0) + std::exp(s1));
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(std::abs(out(f, c) - (a0 * v0[c] + a1 * v1[c])) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(frame_level_cross_attention(random_matrix(3, 4, rng), p, wq, wk, wv),
                  DimensionError);
}

TEST_CASE("untrained network predicts zeros, deterministically") {
  const DenoiserConfig c;
  const DitDenoiser model(c, init_weights(c, 5));
  Rng rng(4);
  const LatentSequence z = random_input(c, 21, rng);
  const PromptTrack p = random_track(21, 1, c.text_dims, rng);
  const Matrix out = model.predict_x0(z, p);
  CHECK(out == Matrix(21, c.dims, 0.0));

  const DitDenoiser live(c, live_weights(c, 5));
  CHECK(live.predict_x0(z, p) == live.predict_x0(z, p));
  CHECK(init_weights(c, 5) == init_weights(c, 5));
  CHECK(init_weights(c, 5) != init_weights(c, 6));
}

TEST_CASE("network input validation") {
  const DenoiserConfig c;
  const DitDenoiser model(c, init_weights(c, 5));
  Rng rng(5);
  LatentSequence z = random_input(c, 7, rng);
  CHECK_THROWS_AS((void)model.predict_x0(z, random_track(6, 1, c.text_dims, rng)), DimensionError);
  z.timesteps[2] = c.steps + 1;
  CHECK_THROWS_AS((void)model.predict_x0(z, random_track(7, 1, c.text_dims, rng)), RangeError);
  LatentSequence narrow{random_matrix(7, 3, rng), TimestepVector::uniform(7, 1)};
  CHECK_THROWS_AS((void)model.predict_x0(narrow, random_track(7, 1, c.text_dims, rng)),
                  DimensionError);
  DenoiserConfig bad = c;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(DitDenoiser(c, init_weights(tiny_config(), 1)), ContractError);
}

TEST_CASE("network is equivariant to joint frame permutation without positions") {
  DenoiserConfig c = tiny_config();
  c.positional = false;
  const DitDenoiser model(c, live_weights(c, 7));
  Rng rng(6);
  const LatentSequence z = random_input(c, 5, rng);
  const PromptTrack p = random_track(5, c.text_tokens, c.text_dims, rng);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  LatentSequence zp{Matrix(5, c.dims), {}};
  PromptTrack pp = p;
  for (std::size_t i = 0; i < 5; ++i) {
    zp.latents.set_row_block(i, z.latents.row_block(perm[i], 1));
    zp.timesteps.values.push_back(z.timesteps[perm[i]]);
    pp.blocks.set_row_block(i * c.text_tokens, p.block(perm[i]));
  }
  const Matrix out = model.predict_x0(z, p);
  const Matrix outp = model.predict_x0(zp, pp);
  for (std::size_t i = 0; i < 5; ++i) {
    const Matrix a = outp.row_block(i, 1);
    const Matrix b = out.row_block(perm[i], 1);
    CHECK(max_abs_diff(a, b) <= 1e-12);
  }
}

TEST_CASE("network gradients pass grad check") {
  const DenoiserConfig c = tiny_config();
  const DenoiserWeights w = live_weights(c, 9);
  Rng rng(8);
  const LatentSequence z = random_input(c, c.window, rng);
  const PromptTrack p = random_track(c.window, c.text_tokens, c.text_dims, rng);
  const Matrix target = random_matrix(c.window, c.dims, rng);
  Tape tape;
  const auto params = register_parameters(tape, w);
  const Var pred = dit_forward(tape, params, c, z, p);
  const Var loss = tape.mean_squared_error(pred, tape.constant(target));
  const GradCheckReport report = grad_check(tape, loss, 1e-5);
  INFO("worst: " << report.worst_parameter << "[" << report.worst_entry << "]");
  CHECK(report.max_relative_error <= 1e-4);
  CHECK(report.entries_checked == w.count());
}

TEST_CASE("posterior mean formula") {
  CHECK(gaussian_posterior_mean(0.7, 0.2, 0.01, 1.0) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(gaussian_posterior_mean(0.7, 0.2, 0.01, 0.0) == 0.2);
  // Precision-weighted combination of the prior and the rescaled observation.
  const double ab = 0.4, var = 0.3, z = 1.1, mu = -0.5;
  const double obs_var = (1 - ab) / ab;
  const double expected = (mu / var + (z / std::sqrt(ab)) / obs_var) / (1 / var + 1 / obs_var);
  CHECK(gaussian_posterior_mean(z, mu, var, ab) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("oracle limits") {
  const NoiseSchedule s = build_schedule(1000, 1e-4, 0.02, ScheduleKind::kLinear);
  WorldParams wp;
  wp.identity_sigma = 0.3;
  const World world(wp);
  const OracleDenoiser oracle(world, s);
  Rng rng(10);
  const SceneScript script = world.sample_script(2, 6, rng);
  const PromptTrack prompts =
      build_prompt_track(CaptionDocument{script.captions}, world.conditioning_embedder(), 1);
  const Matrix z0 = world.render_latents(script, rng);
  const Matrix means = world.conditional_means(script);

  CHECK(oracle.predict_x0({z0, TimestepVector::uniform(6, 0)}, prompts) == z0);
  const Matrix far = oracle.predict_x0({random_matrix(6, 16, rng), TimestepVector::uniform(6, 1000)},
                                       prompts);
  CHECK(max_abs_diff(far, means) <= 0.02);

  WorldParams sharp = WorldParams{};
  sharp.sigma = 1e-12;
  const World crisp(sharp);
  const OracleDenoiser exact(crisp, s);
  const Matrix cm = crisp.conditional_means(script);
  for (int t : {1, 10, 500, 1000}) {
    const Matrix out =
        exact.predict_x0({random_matrix(6, 16, rng, 3.0), TimestepVector::uniform(6, t)}, prompts);
    CHECK(max_abs_diff(out, cm) <= 1e-9);
  }

  PromptTrack global = replicate_global_prompt(World::global_caption(script), 6,
                                               world.conditioning_embedder(), 1);
  CHECK_THROWS_AS((void)oracle.predict_x0({z0, TimestepVector::uniform(6, 5)}, global),
                  ContractError);
}

TEST_CASE("checkpoint round-trip and corruption") {
  const DenoiserConfig c = tiny_config();
  const DenoiserWeights w = live_weights(c, 11);
  const auto dir = std::filesystem::temp_directory_path() / "driftless_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "a.dckp";
  save_checkpoint(path, c, w);
  const auto [c2, w2] = load_checkpoint(path);
  CHECK(c2 == c);
  CHECK(w2 == w);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(dir / "bad.dckp", std::ios::binary);
    out << b;
  };
  write(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.dckp"), FormatError);
  write(bytes + "x");
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.dckp"), FormatError);
  write("XCKP" + bytes.substr(4));
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.dckp"), FormatError);
  std::string renamed = bytes;
  renamed[renamed.find("in.w")] = 'x';
  write(renamed);
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.dckp"), ContractError);
  std::filesystem::remove_all(dir);
}
