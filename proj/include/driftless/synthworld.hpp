#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "driftless/conditioning.hpp"
#include "driftless/matrix.hpp"
#include "driftless/rng.hpp"

namespace driftless {

/// Knobs of the synthetic multi-scene world.
///
/// The latent space is split by a seeded orthonormal basis into a scene block
/// (one axis per scene), a drift block (within-scene motion) and an identity
/// block carrying a per-clip constant offset. Text and frame embedders only see
/// the first two blocks.
struct WorldParams {
  std::size_t dims = 16;           // D
  std::size_t num_scenes = 8;
  std::size_t drift_dims = 4;
  double radius = 1.0;             // r, norm of every scene mean
  double sigma = 0.1;              // within-scene standard deviation
  double dynamics_rate = 0.5;      // drift magnitude at phase 1
  double identity_sigma = 0.0;     // per-clip identity offset scale
  std::size_t text_dims = 8;       // D_text of the conditioning embedder
  std::uint64_t seed = 7;
};

/// Per-frame ground truth for one clip.
struct SceneScript {
  std::vector<std::size_t> scene_of;
  std::vector<double> phase;
  std::vector<std::string> captions;

  [[nodiscard]] std::size_t frames() const noexcept { return scene_of.size(); }
  /// Distinct scenes in order of first appearance.
  [[nodiscard]] std::vector<std::size_t> scene_order() const;
};

/// Scene id and phase recovered from a synthesized caption.
struct CaptionMeaning {
  std::size_t scene = 0;
  double phase = 0.0;
};

class World {
 public:
  explicit World(WorldParams params);

  [[nodiscard]] const WorldParams& params() const noexcept { return params_; }
  [[nodiscard]] std::size_t dims() const noexcept { return params_.dims; }

  /// mu_s, norm r.
  [[nodiscard]] std::span<const double> scene_mean(std::size_t scene) const;
  /// d_s, unit norm, orthogonal to every scene mean.
  [[nodiscard]] std::span<const double> drift_direction(std::size_t scene) const;
  /// Unit vectors spanning the identity block (may be empty).
  [[nodiscard]] const Matrix& identity_basis() const noexcept { return identity_basis_; }
  /// Orthonormal rows spanning {mu_s} and {d_s}.
  [[nodiscard]] const Matrix& semantic_basis() const noexcept { return semantic_basis_; }

  /// mu_s + rate * phase * d_s.
  [[nodiscard]] std::vector<double> frame_mean(std::size_t scene, double phase) const;
  /// F x D matrix of frame_mean over a script.
  [[nodiscard]] Matrix conditional_means(const SceneScript& script) const;

  /// Script with `scenes_in_clip` runs; boundaries drawn uniformly without
  /// replacement, scene ids distinct where the world has enough scenes and
  /// otherwise distinct from the previous run.
  [[nodiscard]] SceneScript sample_script(std::size_t scenes_in_clip, std::size_t frames,
                                          Rng& rng) const;
  /// Clean latents for a script.
  [[nodiscard]] Matrix render_latents(const SceneScript& script, Rng& rng) const;

  [[nodiscard]] static std::string caption(std::size_t scene, double phase);
  /// "scenes:a,b,c [tag]" listing scenes in order of appearance.
  [[nodiscard]] static std::string global_caption(const SceneScript& script);
  /// Throws ParseError for captions this world did not produce.
  [[nodiscard]] CaptionMeaning parse_caption(std::string_view caption) const;
  [[nodiscard]] std::vector<std::size_t> parse_global_caption(std::string_view caption) const;

  /// Conditioning embedder handed to the denoiser: scene caption -> u_s + phase * w,
  /// global caption -> normalized sum of u_s. Returns 1 x text_dims.
  [[nodiscard]] Matrix condition_embedding(std::string_view caption) const;
  [[nodiscard]] TextEmbedder conditioning_embedder() const;
  /// Inverse of condition_embedding on scene captions; throws ContractError
  /// when the block is not a scene caption embedding.
  [[nodiscard]] CaptionMeaning decode_condition(std::span<const double> block) const;

  /// Ground-truth text embedding (unit vector in R^D).
  [[nodiscard]] std::vector<double> text_embedding(std::string_view caption) const;
  /// Ground-truth frame embedding: projection onto the semantic block, normalized.
  [[nodiscard]] std::vector<double> frame_embedding(std::span<const double> latent) const;

 private:
  WorldParams params_;
  Matrix scene_means_;      // num_scenes x D
  Matrix drift_dirs_;       // num_scenes x D
  Matrix semantic_basis_;   // (num_scenes + drift_dims) x D
  Matrix identity_basis_;   // (D - num_scenes - drift_dims) x D
  Matrix text_scene_;       // num_scenes x text_dims
  std::vector<double> text_phase_;
};

/// Sequence of unit-norm embeddings: text prompt, single frame.
struct EmbeddingPair {
  std::function<std::vector<double>(std::string_view)> text;
  std::function<std::vector<double>(std::span<const double>)> frame;
};

EmbeddingPair ground_truth_embedders(const World& world);

/// One generated clip with everything needed to write it to disk.
struct Clip {
  SceneScript script;
  Matrix latents;
};

/// Clip i uses the stream split from (seed, i), so clips can be produced in
/// any order or in parallel.
Clip make_clip(const World& world, std::size_t scenes_in_clip, std::size_t frames,
               std::uint64_t seed, std::size_t index);

/// Writes clip_NNNNN.dlat and clip_NNNNN.json plus index.csv into `dir`.
void write_dataset(const std::filesystem::path& dir, const std::vector<Clip>& clips);
/// Reads a dataset written by write_dataset.
std::vector<Clip> read_dataset(const std::filesystem::path& dir, const World& world);

}  // namespace driftless
