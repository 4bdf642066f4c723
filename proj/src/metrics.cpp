#include "driftless/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "driftless/errors.hpp"

namespace driftless {

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine: length mismatch");
  }
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (!(aa > 0.0) || !(bb > 0.0)) {
    throw ContractError("cosine: zero vector");
  }
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

std::vector<std::size_t> video_sample_indices(std::size_t frames) {
  std::vector<std::size_t> idx;
  if (frames < kVideoSampleFrames) {
    for (std::size_t f = 0; f < frames; ++f) {
      idx.push_back(f);
    }
    return idx;
  }
  for (std::size_t i = 0; i < kVideoSampleFrames; ++i) {
    idx.push_back(static_cast<std::size_t>(std::lround(
        static_cast<double>(i) * static_cast<double>(frames - 1) / (kVideoSampleFrames - 1))));
  }
  return idx;
}

std::vector<double> video_embedding(const Matrix& video, const EmbeddingPair& embeds) {
  if (video.rows() == 0) {
    throw ContractError("video embedding: empty video");
  }
  std::vector<double> mean;
  for (std::size_t f : video_sample_indices(video.rows())) {
    const auto e = embeds.frame(video.row(f));
    if (mean.empty()) {
      mean.assign(e.size(), 0.0);
    }
    for (std::size_t d = 0; d < e.size(); ++d) {
      mean[d] += e[d];
    }
  }
  double n = 0.0;
  for (double x : mean) {
    n += x * x;
  }
  n = std::sqrt(n);
  if (!(n > 0.0)) {
    throw ContractError("video embedding: sampled frame embeddings cancel out");
  }
  for (double& x : mean) {
    x /= n;
  }
  return mean;
}

double global_similarity(std::string_view global_prompt, const Matrix& video,
                         const EmbeddingPair& embeds) {
  return cosine(embeds.text(global_prompt), video_embedding(video, embeds));
}

namespace {

void check_track(const PromptTrack& prompts, const Matrix& video) {
  if (prompts.frames != video.rows()) {
    throw ContractError("metrics: " + std::to_string(prompts.frames) + " prompts for " +
                        std::to_string(video.rows()) + " frames");
  }
  if (prompts.raw.size() != prompts.frames) {
    throw ContractError("metrics: prompt track carries no caption text");
  }
  if (video.rows() == 0) {
    throw ContractError("metrics: empty video");
  }
}

}  // namespace

double frame_consistency(const PromptTrack& prompts, const Matrix& video,
                         const EmbeddingPair& embeds) {
  check_track(prompts, video);
  double total = 0.0;
  for (std::size_t f = 0; f < video.rows(); ++f) {
    total += cosine(embeds.text(prompts.raw[f]), embeds.frame(video.row(f)));
  }
  return total / static_cast<double>(video.rows());
}

ConfusionReport confusion_from_similarities(const Matrix& s_tt, const Matrix& s_tf,
                                            double denom_floor) {
  const std::size_t n = s_tt.rows();
  if (s_tt.cols() != n || s_tf.rows() != n || s_tf.cols() != n) {
    throw DimensionError("confusion degree: similarity matrices must be square and equal");
  }
  if (n == 0) {
    throw ContractError("confusion degree: no prompts");
  }
  ConfusionReport r;
  r.s_tt = s_tt;
  r.s_tf = s_tf;
  r.s_tt_norm = Matrix(n, n);
  r.s_tf_norm = Matrix(n, n);
  r.per_prompt.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = std::max(s_tt(i, i), denom_floor);
    const double df = std::max(s_tf(i, i), denom_floor);
    double cd = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      r.s_tt_norm(i, j) = s_tt(i, j) / dt;
      r.s_tf_norm(i, j) = s_tf(i, j) / df;
      cd += std::max(0.0, r.s_tf_norm(i, j) - r.s_tt_norm(i, j));
    }
    r.per_prompt[i] = cd;
  }
  double total = 0.0;
  for (double c : r.per_prompt) {
    total += c;
  }
  r.mean_cd = total / static_cast<double>(n);
  return r;
}

ConfusionReport confusion_degree(const PromptTrack& prompts, const Matrix& video,
                                 const EmbeddingPair& embeds, double denom_floor) {
  check_track(prompts, video);
  const std::size_t n = video.rows();
  std::vector<std::vector<double>> text(n), frame(n);
  for (std::size_t i = 0; i < n; ++i) {
    text[i] = embeds.text(prompts.raw[i]);
    frame[i] = embeds.frame(video.row(i));
  }
  Matrix s_tt(n, n), s_tf(n, n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      s_tt(i, j) = cosine(text[i], text[j]);
      s_tf(i, j) = cosine(text[i], frame[j]);
    }
  }
  return confusion_from_similarities(s_tt, s_tf, denom_floor);
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  out << "prompt,cd\n" << std::setprecision(17);
  for (std::size_t i = 0; i < report.per_prompt.size(); ++i) {
    out << (i + 1) << ',' << report.per_prompt[i] << '\n';
  }
  out << "mean," << report.mean_cd << '\n';
}

double ols_slope(const std::vector<double>& y) {
  const std::size_t n = y.size();
  if (n < 2) {
    throw ContractError("ols_slope: need at least two points");
  }
  const double xbar = static_cast<double>(n - 1) / 2.0;
  double ybar = 0.0;
  for (double v : y) {
    ybar += v;
  }
  ybar /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - xbar;
    sxy += dx * (y[i] - ybar);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

DriftProfile drift_profile(const Matrix& video, const Matrix& means) {
  if (means.empty()) {
    throw ContractError("drift profile: ground-truth means are unavailable");
  }
  if (means.rows() != video.rows() || means.cols() != video.cols()) {
    throw DimensionError("drift profile: means and video differ in shape");
  }
  DriftProfile p;
  for (std::size_t f = 0; f < video.rows(); ++f) {
    double e = 0.0;
    for (std::size_t d = 0; d < video.cols(); ++d) {
      const double diff = video(f, d) - means(f, d);
      e += diff * diff;
    }
    p.errors.push_back(e);
  }
  p.slope = ols_slope(p.errors);
  return p;
}

double sign_test_p_value(std::size_t successes, std::size_t trials) {
  if (successes > trials) {
    throw ContractError("sign test: more successes than trials");
  }
  double p = 0.0;
  for (std::size_t k = successes; k <= trials; ++k) {
    // C(n, k) / 2^n via lgamma keeps this exact enough for n up to a few hundred.
    p += std::exp(std::lgamma(static_cast<double>(trials) + 1) -
                  std::lgamma(static_cast<double>(k) + 1) -
                  std::lgamma(static_cast<double>(trials - k) + 1) -
                  static_cast<double>(trials) * std::log(2.0));
  }
  return std::min(p, 1.0);
}

}  // namespace driftless
