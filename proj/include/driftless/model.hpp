#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "driftless/conditioning.hpp"
#include "driftless/matrix.hpp"
#include "driftless/schedule.hpp"
#include "driftless/synthworld.hpp"
#include "driftless/tape.hpp"

namespace driftless {

struct DenoiserConfig {
  std::size_t dims = 16;         // D
  std::size_t text_dims = 8;     // D_text
  std::size_t text_tokens = 1;   // L_text
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t hidden = 64;
  std::size_t mlp = 128;
  std::size_t window = 21;       // F_window
  int steps = 1000;              // T, range of the timestep embedding
  std::size_t time_features = 16;
  bool positional = true;
  double ln_eps = 1e-5;

  /// Throws ConfigError when shapes are inconsistent.
  void validate() const;
  bool operator==(const DenoiserConfig&) const = default;
};

/// Named parameter matrices in a fixed order.
struct DenoiserWeights {
  std::vector<std::string> names;
  std::vector<Matrix> values;

  [[nodiscard]] const Matrix& get(const std::string& name) const;
  [[nodiscard]] std::size_t count() const noexcept;  // total scalar parameters
  bool operator==(const DenoiserWeights&) const = default;
};

/// Random init (1/sqrt(fan_in) normals, unit gains, zero biases); the output
/// head is zero so an untrained model predicts all zeros.
DenoiserWeights init_weights(const DenoiserConfig& config, std::uint64_t seed);

/// D_theta: x0 prediction for every frame of z (whose timesteps are per frame).
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  [[nodiscard]] virtual Matrix predict_x0(const LatentSequence& z,
                                          const PromptTrack& prompts) const = 0;
  /// Latent width D.
  [[nodiscard]] virtual std::size_t dims() const = 0;
};

/// Row f = softmax(q_f Wq (c_f Wk)^T / sqrt(d)) (c_f Wv), c_f being prompt
/// block f. Single head; d is the projected width.
Matrix frame_level_cross_attention(const Matrix& queries, const PromptTrack& prompts,
                                   const Matrix& w_q, const Matrix& w_k, const Matrix& w_v);

/// Records the network on `tape`. Parameters are registered in weights order
/// so tape.parameters()[i] corresponds to weights.values[i]; pass
/// `params` to reuse leaves already on the tape (batched training).
Var dit_forward(Tape& tape, const std::vector<Var>& params, const DenoiserConfig& config,
                const LatentSequence& z, const PromptTrack& prompts);
std::vector<Var> register_parameters(Tape& tape, const DenoiserWeights& weights);

class DitDenoiser final : public Denoiser {
 public:
  DitDenoiser(DenoiserConfig config, DenoiserWeights weights);

  [[nodiscard]] Matrix predict_x0(const LatentSequence& z,
                                  const PromptTrack& prompts) const override;
  [[nodiscard]] std::size_t dims() const override { return config_.dims; }
  [[nodiscard]] const DenoiserConfig& config() const noexcept { return config_; }
  [[nodiscard]] const DenoiserWeights& weights() const noexcept { return weights_; }

 private:
  DenoiserConfig config_;
  DenoiserWeights weights_;
};

/// Closed-form posterior mean for the synthetic world. Each frame is treated
/// on its own with prior N(frame mean, Sigma), Sigma = sigma^2 on the semantic
/// block and sigma^2 + identity_sigma^2 on the identity block.
class OracleDenoiser final : public Denoiser {
 public:
  OracleDenoiser(const World& world, const NoiseSchedule& schedule);

  [[nodiscard]] Matrix predict_x0(const LatentSequence& z,
                                  const PromptTrack& prompts) const override;
  [[nodiscard]] std::size_t dims() const override { return world_.dims(); }

 private:
  const World& world_;
  const NoiseSchedule& schedule_;
};

/// Posterior mean of z0 ~ N(mu, variance) given z = sqrt(ab) z0 + sqrt(1 - ab) eps.
double gaussian_posterior_mean(double z, double mu, double variance, double alpha_bar);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "DCKP", u32 version, config, u64 parameter count, then per parameter:
/// u32 name length, name, u64 rows, u64 cols, f64 data. Little-endian.
void save_checkpoint(const std::filesystem::path& path, const DenoiserConfig& config,
                     const DenoiserWeights& weights);
std::pair<DenoiserConfig, DenoiserWeights> load_checkpoint(const std::filesystem::path& path);

}  // namespace driftless
