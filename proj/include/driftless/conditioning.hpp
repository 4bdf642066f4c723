#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "driftless/matrix.hpp"

namespace driftless {

/// Frame-level captions keyed "1".."N" in the source JSON.
struct CaptionDocument {
  std::vector<std::string> captions;

  [[nodiscard]] std::size_t frame_count() const noexcept { return captions.size(); }
  bool operator==(const CaptionDocument&) const = default;
};

/// Parses a caption file: one optional ``` fence around a JSON object whose
/// keys are exactly the strings "1".."expected_frames", in order, each mapped
/// to a non-empty string. Throws ValidationError naming the first violation.
CaptionDocument parse_caption_document(std::string_view text, std::size_t expected_frames);

/// Pretty-printed JSON accepted by parse_caption_document.
std::string serialize_caption_document(const CaptionDocument& doc);

CaptionDocument read_caption_file(const std::filesystem::path& path, std::size_t expected_frames);
void write_caption_file(const std::filesystem::path& path, const CaptionDocument& doc);

enum class PromptSource { kFrameLevel, kVideoLevelReplicated };

/// Per-frame conditioning: F blocks of tokens x width embeddings, stacked
/// row-wise into `blocks` ((F * tokens) x width).
struct PromptTrack {
  std::size_t frames = 0;
  std::size_t tokens = 0;  // L_text
  std::size_t width = 0;   // D_text
  Matrix blocks;
  PromptSource source = PromptSource::kFrameLevel;
  std::vector<std::string> raw;  // empty, or one caption per frame

  [[nodiscard]] Matrix block(std::size_t frame) const;
  [[nodiscard]] PromptTrack slice(std::size_t start, std::size_t count) const;
  /// Frames of `head` followed by the frames of `tail`.
  [[nodiscard]] static PromptTrack concat(const PromptTrack& head, const PromptTrack& tail);
};

/// Text encoder stand-in: one caption -> tokens x width matrix.
using TextEmbedder = std::function<Matrix(std::string_view)>;

PromptTrack build_prompt_track(const CaptionDocument& doc, const TextEmbedder& embedder,
                               std::size_t tokens);
PromptTrack replicate_global_prompt(const std::string& global_caption, std::size_t frames,
                                    const TextEmbedder& embedder, std::size_t tokens);

enum class TemplateKind { kCaptioning, kConversion };

/// System prompt text. Substitution sites are written {{NUM_FRAMES}},
/// {{NUM_PROMPTS}} and {{GLOBAL_PROMPT}}.
struct PromptTemplate {
  std::string body;
  TemplateKind kind = TemplateKind::kCaptioning;
};

PromptTemplate load_template(const std::filesystem::path& path, TemplateKind kind);
/// Loads templates/frame_captioning.txt or templates/global_to_frame.txt.
PromptTemplate load_builtin_template(const std::filesystem::path& template_dir, TemplateKind kind);
std::string render_template(const PromptTemplate& tmpl, std::size_t count,
                            const std::optional<std::string>& global_prompt = std::nullopt);

}  // namespace driftless
