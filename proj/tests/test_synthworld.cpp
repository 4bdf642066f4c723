#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "driftless/errors.hpp"
#include "driftless/metrics.hpp"
#include "driftless/synthworld.hpp"

using namespace driftless;

namespace {

double dotp(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t runs(const SceneScript& s) {
  std::size_t n = 1;
  for (std::size_t f = 1; f < s.frames(); ++f) {
    n += s.scene_of[f] != s.scene_of[f - 1] ? 1 : 0;
  }
  return n;
}

}  // namespace

TEST_CASE("scene means are orthogonal with norm r and drift directions are orthogonal to them") {
  WorldParams p;
  p.radius = 2.0;
  const World world(p);
  for (std::size_t a = 0; a < p.num_scenes; ++a) {
    CHECK(std::sqrt(dotp(world.scene_mean(a), world.scene_mean(a))) == doctest::Approx(2.0));
    CHECK(dotp(world.drift_direction(a), world.drift_direction(a)) == doctest::Approx(1.0));
    for (std::size_t b = 0; b < p.num_scenes; ++b) {
      CHECK(std::abs(dotp(world.drift_direction(a), world.scene_mean(b))) <= 1e-12);
      if (a != b) {
        CHECK(std::abs(dotp(world.scene_mean(a), world.scene_mean(b))) <= 1e-12);
      }
    }
  }
  CHECK_THROWS_AS((void)world.scene_mean(p.num_scenes), RangeError);
}

TEST_CASE("world parameter validation") {
  WorldParams p;
  p.sigma = 0.0;
  CHECK_THROWS_AS(World{p}, ConfigError);
  p = WorldParams{};
  p.num_scenes = 14;
  CHECK_THROWS_AS(World{p}, ConfigError);
  p = WorldParams{};
  p.text_dims = 4;
  CHECK_THROWS_AS(World{p}, ConfigError);
}

TEST_CASE("single-scene script") {
  const World world(WorldParams{});
  Rng rng(1);
  const SceneScript s = world.sample_script(1, 11, rng);
  for (std::size_t f = 0; f < 11; ++f) {
    CHECK(s.scene_of[f] == s.scene_of[0]);
    CHECK(s.phase[f] == doctest::Approx(f / 10.0).epsilon(1e-12));
    CHECK(s.captions[f] == World::caption(s.scene_of[f], s.phase[f]));
  }
}

TEST_CASE("one scene per frame") {
  const World world(WorldParams{});
  Rng rng(2);
  const SceneScript s = world.sample_script(8, 8, rng);
  CHECK(runs(s) == 8);
  for (std::size_t f = 0; f < 8; ++f) {
    CHECK(s.phase[f] == 0.0);
  }
  // More runs than world scenes: neighbours still differ.
  const SceneScript many = world.sample_script(12, 12, rng);
  CHECK(runs(many) == 12);
}

TEST_CASE("three scenes over 21 frames have exactly two boundaries") {
  const World world(WorldParams{});
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const SceneScript s = world.sample_script(3, 21, rng);
    std::size_t boundaries = 0;
    std::size_t run_len = 1;
    for (std::size_t f = 1; f < 21; ++f) {
      if (s.scene_of[f] != s.scene_of[f - 1]) {
        ++boundaries;
        CHECK(s.phase[f] == 0.0);
        run_len = 1;
      } else {
        CHECK(s.phase[f] > s.phase[f - 1]);
        ++run_len;
      }
    }
    CHECK(boundaries == 2);
    CHECK(s.scene_order().size() == 3);
  }
  CHECK_THROWS_AS((void)world.sample_script(0, 5, rng), ContractError);
  CHECK_THROWS_AS((void)world.sample_script(6, 5, rng), ContractError);
}

TEST_CASE("noise-free rendering") {
  WorldParams p;
  p.sigma = 1e-300;
  p.dynamics_rate = 0.0;
  const World still(p);
  Rng rng(4);
  const SceneScript s = still.sample_script(3, 15, rng);
  const Matrix z = still.render_latents(s, rng);
  for (std::size_t f = 0; f < 15; ++f) {
    const auto mu = still.scene_mean(s.scene_of[f]);
    for (std::size_t d = 0; d < z.cols(); ++d) {
      CHECK(z(f, d) == doctest::Approx(mu[d]).epsilon(1e-15));
    }
  }

  p.dynamics_rate = 0.5;
  const World moving(p);
  const SceneScript one = moving.sample_script(1, 9, rng);
  const Matrix line = moving.render_latents(one, rng);
  // Every frame lies on the segment from the first frame to the last.
  std::vector<double> dir(p.dims);
  for (std::size_t d = 0; d < p.dims; ++d) {
    dir[d] = line(8, d) - line(0, d);
  }
  const double len2 = dotp(dir, dir);
  for (std::size_t f = 0; f < 9; ++f) {
    std::vector<double> off(p.dims);
    for (std::size_t d = 0; d < p.dims; ++d) {
      off[d] = line(f, d) - line(0, d);
    }
    const double along = dotp(off, dir) / len2;
    double resid = 0.0;
    for (std::size_t d = 0; d < p.dims; ++d) {
      resid += std::pow(off[d] - along * dir[d], 2);
    }
    CHECK(resid <= 1e-24);
    CHECK(along == doctest::Approx(f / 8.0).epsilon(1e-9));
  }
}

TEST_CASE("empirical per-scene mean converges to the scene mean") {
  const World world(WorldParams{});
  SceneScript s;
  const std::size_t n = 10000;
  for (std::size_t i = 0; i < n; ++i) {
    s.scene_of.push_back(2);
    s.phase.push_back(0.0);
    s.captions.push_back(World::caption(2, 0.0));
  }
  Rng rng(5);
  const Matrix z = world.render_latents(s, rng);
  const auto mu = world.scene_mean(2);
  const double se = world.params().sigma / std::sqrt(static_cast<double>(n));
  for (std::size_t d = 0; d < world.dims(); ++d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean += z(i, d);
    }
    mean /= n;
    CHECK(std::abs(mean - mu[d]) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("identity offset is shared by a clip and invisible to the frame embedder") {
  WorldParams p;
  p.identity_sigma = 0.5;
  const World world(p);
  Rng rng(6);
  const SceneScript s = world.sample_script(2, 30, rng);
  const Matrix z = world.render_latents(s, rng);
  const Matrix& idb = world.identity_basis();
  REQUIRE(idb.rows() == p.dims - p.num_scenes - p.drift_dims);
  double spread = 0.0;
  for (std::size_t k = 0; k < idb.rows(); ++k) {
    double mean = 0.0;
    for (std::size_t f = 0; f < 30; ++f) {
      mean += dotp(z.row(f), idb.row(k)) / 30.0;
    }
    spread += mean * mean;
  }
  CHECK(spread > 0.01);
  std::vector<double> probe(p.dims, 0.0);
  const auto mu = world.scene_mean(1);
  for (std::size_t d = 0; d < p.dims; ++d) {
    probe[d] = mu[d] + 3.0 * idb(0, d);
  }
  const auto e = world.frame_embedding(probe);
  for (std::size_t d = 0; d < p.dims; ++d) {
    CHECK(e[d] == doctest::Approx(mu[d] / p.radius).epsilon(1e-12));
  }
}

TEST_CASE("ground-truth embedder examples") {
  const World world(WorldParams{});
  const EmbeddingPair embeds = ground_truth_embedders(world);
  for (std::size_t s = 0; s < 8; ++s) {
    const auto t = embeds.text(World::caption(s, 0.0));
    const auto v = embeds.frame(world.scene_mean(s));
    const auto mu = world.scene_mean(s);
    for (std::size_t d = 0; d < world.dims(); ++d) {
      CHECK(t[d] == doctest::Approx(mu[d]).epsilon(1e-12));
      CHECK(v[d] == doctest::Approx(mu[d]).epsilon(1e-12));
    }
    for (std::size_t b = 0; b < s; ++b) {
      CHECK(std::abs(cosine(t, embeds.text(World::caption(b, 0.0)))) <= 1e-12);
    }
  }
}

TEST_CASE("text and rendered frame agree at vanishing noise") {
  WorldParams p;
  p.sigma = 1e-300;
  const World world(p);
  const EmbeddingPair embeds = ground_truth_embedders(world);
  Rng rng(7);
  const SceneScript s = world.sample_script(4, 40, rng);
  const Matrix z = world.render_latents(s, rng);
  for (std::size_t f = 0; f < 40; ++f) {
    CHECK(cosine(embeds.text(s.captions[f]), embeds.frame(z.row(f))) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("scene classification recovers the script") {
  WorldParams p;
  p.sigma = p.radius / 6.0;
  const World world(p);
  Rng rng(8);
  std::size_t correct = 0, total = 0;
  for (int clip = 0; clip < 50; ++clip) {
    const SceneScript s = world.sample_script(3, 40, rng);
    const Matrix z = world.render_latents(s, rng);
    for (std::size_t f = 0; f < 40; ++f) {
      std::size_t best = 0;
      double best_sim = -2.0;
      for (std::size_t c = 0; c < p.num_scenes; ++c) {
        const double sim = dotp(world.frame_embedding(z.row(f)),
                                world.text_embedding(World::caption(c, 0.0)));
        if (sim > best_sim) {
          best_sim = sim;
          best = c;
        }
      }
      correct += best == s.scene_of[f] ? 1 : 0;
      ++total;
    }
  }
  CHECK(static_cast<double>(correct) / total >= 0.99);
}

TEST_CASE("captions parse back and foreign captions are rejected") {
  const World world(WorldParams{});
  const CaptionMeaning m = world.parse_caption(World::caption(5, 0.3333333));
  CHECK(m.scene == 5);
  CHECK(m.phase == 0.3333);
  CHECK_THROWS_AS((void)world.parse_caption("A dog is on the left of a table."), ParseError);
  CHECK_THROWS_AS((void)world.parse_caption("scene:9 phase:0.1000"), ParseError);
  CHECK_THROWS_AS((void)world.parse_caption("scene:1 phase:1.5"), ParseError);
  CHECK_THROWS_AS((void)world.parse_caption("scene:x phase:0.1"), ParseError);
  CHECK_THROWS_AS((void)world.text_embedding("hello"), ParseError);

  SceneScript s;
  s.scene_of = {3, 3, 0, 6};
  s.phase = {0, 1, 0, 0};
  const std::string g = World::global_caption(s);
  CHECK(g.starts_with("scenes:3,0,6 ["));
  CHECK(world.parse_global_caption(g) == std::vector<std::size_t>{3, 0, 6});
}

TEST_CASE("condition embedding decodes back to its meaning") {
  const World world(WorldParams{});
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto scene = static_cast<std::size_t>(rng.uniform_int(0, 7));
    const std::string c = World::caption(scene, rng.uniform());
    const CaptionMeaning expect = world.parse_caption(c);
    const CaptionMeaning got = world.decode_condition(world.condition_embedding(c).row(0));
    CHECK(got.scene == expect.scene);
    CHECK(got.phase == doctest::Approx(expect.phase).epsilon(1e-12));
  }
  const Matrix global = world.condition_embedding("scenes:1,2 [Long Shot, Eye-Level]");
  CHECK_THROWS_AS((void)world.decode_condition(global.row(0)), ContractError);
}

TEST_CASE("same seed gives byte-identical datasets") {
  const World world(WorldParams{});
  const auto root = std::filesystem::temp_directory_path() / "driftless_ds_test";
  std::filesystem::remove_all(root);
  for (const char* name : {"a", "b"}) {
    std::vector<Clip> clips;
    for (std::size_t i = 0; i < 6; ++i) {
      clips.push_back(make_clip(world, 1 + i % 2, 12, 99, i));
    }
    write_dataset(root / name, clips);
  }
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(root / "a")) {
    const auto other = root / "b" / entry.path().filename();
    CHECK(file_bytes(entry.path()) == file_bytes(other));
    ++files;
  }
  CHECK(files == 13);
  const auto back = read_dataset(root / "a", world);
  REQUIRE(back.size() == 6);
  const Clip again = make_clip(world, 2, 12, 99, 5);
  CHECK(back[5].latents == again.latents);
  CHECK(back[5].script.captions == again.script.captions);
  std::filesystem::remove_all(root);
}
