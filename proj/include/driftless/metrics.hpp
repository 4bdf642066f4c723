#pragma once

#include <cstddef>
#include <filesystem>
#include <string_view>
#include <vector>

#include "driftless/conditioning.hpp"
#include "driftless/matrix.hpp"
#include "driftless/synthworld.hpp"

namespace driftless {

inline constexpr double kDenomFloor = 1e-6;
inline constexpr std::size_t kVideoSampleFrames = 8;

double cosine(std::span<const double> a, std::span<const double> b);

/// Frames 0, ..., F-1 sampled at round(i (F - 1) / 7) for i = 0..7; videos
/// shorter than 8 frames use every frame.
std::vector<std::size_t> video_sample_indices(std::size_t frames);
/// Normalized mean of the sampled frame embeddings.
std::vector<double> video_embedding(const Matrix& video, const EmbeddingPair& embeds);

double global_similarity(std::string_view global_prompt, const Matrix& video,
                         const EmbeddingPair& embeds);

/// Mean over f of Sim(Phi_T(P_f), Phi_V(V_f)); needs the raw captions.
double frame_consistency(const PromptTrack& prompts, const Matrix& video,
                         const EmbeddingPair& embeds);

struct ConfusionReport {
  std::vector<double> per_prompt;  // CD(P_i)
  double mean_cd = 0.0;
  Matrix s_tt, s_tf;               // raw similarities
  Matrix s_tt_norm, s_tf_norm;     // rows divided by their (floored) diagonal
};

/// CD(P_i) = sum_j max(0, S~_TF(i, j) - S~_TT(i, j)), j over every frame.
ConfusionReport confusion_from_similarities(const Matrix& s_tt, const Matrix& s_tf,
                                            double denom_floor = kDenomFloor);
ConfusionReport confusion_degree(const PromptTrack& prompts, const Matrix& video,
                                 const EmbeddingPair& embeds, double denom_floor = kDenomFloor);

/// One row per prompt ("prompt,cd") and a closing "mean" row.
void write_confusion_csv(const std::filesystem::path& path, const ConfusionReport& report);

struct DriftProfile {
  std::vector<double> errors;  // e_f = |V_f - m_f|^2
  double slope = 0.0;          // least-squares slope of e_f on f
};

/// `means` holds the ground-truth conditional mean of every frame.
DriftProfile drift_profile(const Matrix& video, const Matrix& means);

double ols_slope(const std::vector<double>& y);

/// P(X >= successes) for X ~ Binomial(trials, 1/2).
double sign_test_p_value(std::size_t successes, std::size_t trials);

}  // namespace driftless
