#include "driftless/conditioning.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "driftless/errors.hpp"

namespace driftless {

namespace {

using json = nlohmann::json;

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) {
    s.remove_prefix(1);
  }
  while (!s.empty() && is_space(s.back())) {
    s.remove_suffix(1);
  }
  return s;
}

std::string_view strip_fence(std::string_view text) {
  std::string_view body = trim(text);
  constexpr std::string_view fence = "```";
  if (!body.starts_with(fence)) {
    return body;
  }
  const std::size_t line_end = body.find('\n');
  if (line_end == std::string_view::npos) {
    throw ValidationError("code fence is opened but never closed");
  }
  // Anything between the opening backticks and the newline is a language tag.
  const std::string_view tag = trim(body.substr(fence.size(), line_end - fence.size()));
  if (!std::all_of(tag.begin(), tag.end(),
                   [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; })) {
    throw ValidationError("unexpected text after the opening code fence");
  }
  body.remove_prefix(line_end + 1);
  body = trim(body);
  if (!body.ends_with(fence)) {
    throw ValidationError("code fence is opened but never closed");
  }
  body.remove_suffix(fence.size());
  return trim(body);
}

// Captures the top-level entries in document order and the first structural
// violation; nlohmann's SAX interface reports duplicate keys, which the DOM
// parser would silently merge.
class CaptionSax final : public nlohmann::json_sax<json> {
 public:
  struct Entry {
    std::string key;
    std::string value;
    bool is_string = false;
  };

  std::vector<Entry> entries;
  std::optional<std::string> violation;
  std::optional<std::string> syntax_error;
  bool saw_root = false;

  bool null() override { return scalar(); }
  bool boolean(bool) override { return scalar(); }
  bool number_integer(number_integer_t) override { return scalar(); }
  bool number_unsigned(number_unsigned_t) override { return scalar(); }
  bool number_float(number_float_t, const string_t&) override { return scalar(); }
  bool binary(binary_t&) override { return scalar(); }

  bool string(string_t& val) override {
    if (depth_ == 0) {
      root_not_object("a string");
    } else if (depth_ == 1 && !entries.empty()) {
      entries.back().value = val;
      entries.back().is_string = true;
    }
    return true;
  }

  bool start_object(std::size_t) override {
    if (depth_ == 0) {
      saw_root = true;
    } else if (depth_ == 1) {
      note_non_string();
    }
    ++depth_;
    return true;
  }

  bool key(string_t& val) override {
    if (depth_ == 1) {
      if (!seen_.insert(val).second) {
        note("duplicate key \"" + val + "\"");
      }
      entries.push_back(Entry{val, {}, false});
    }
    return true;
  }

  bool end_object() override {
    --depth_;
    return true;
  }

  bool start_array(std::size_t) override {
    if (depth_ == 0) {
      root_not_object("an array");
    } else if (depth_ == 1) {
      note_non_string();
    }
    ++depth_;
    return true;
  }

  bool end_array() override {
    --depth_;
    return true;
  }

  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception& ex) override {
    syntax_error = ex.what();
    return false;
  }

 private:
  bool scalar() {
    if (depth_ == 0) {
      root_not_object("a scalar");
    } else if (depth_ == 1) {
      note_non_string();
    }
    return true;
  }

  void root_not_object(const std::string& what) {
    saw_root = true;
    note("document is " + what + ", expected a JSON object");
  }

  void note_non_string() {
    if (!entries.empty()) {
      note("value for key \"" + entries.back().key + "\" is not a string");
    }
  }

  void note(std::string message) {
    if (!violation) {
      violation = std::move(message);
    }
  }

  int depth_ = 0;
  std::unordered_set<std::string> seen_;
};

std::optional<std::size_t> canonical_index(const std::string& key) {
  if (key.empty() || key.size() > 9 || key.front() == '0') {
    return std::nullopt;
  }
  if (!std::all_of(key.begin(), key.end(),
                   [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(std::stoul(key));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void replace_all(std::string& text, std::string_view needle, std::string_view replacement) {
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), replacement);
    pos += replacement.size();
  }
}

}  // namespace

CaptionDocument parse_caption_document(std::string_view text, std::size_t expected_frames) {
  const std::string_view body = strip_fence(text);
  if (body.empty()) {
    throw ValidationError("document is empty");
  }
  CaptionSax sax;
  const bool ok = json::sax_parse(body.begin(), body.end(), &sax, json::input_format_t::json,
                                  /*strict=*/true);
  if (!ok || sax.syntax_error) {
    throw ValidationError("not a single valid JSON object: " +
                          sax.syntax_error.value_or("parse failed"));
  }
  if (sax.violation) {
    throw ValidationError(*sax.violation);
  }

  CaptionDocument doc;
  doc.captions.reserve(sax.entries.size());
  std::size_t expected = 1;
  for (const auto& entry : sax.entries) {
    const auto index = canonical_index(entry.key);
    if (!index) {
      throw ValidationError("key \"" + entry.key + "\" is not a frame index (1.." +
                            std::to_string(expected_frames) + ")");
    }
    if (*index > expected_frames) {
      throw ValidationError("extra key \"" + entry.key + "\" beyond " +
                            std::to_string(expected_frames) + " frames");
    }
    if (*index > expected) {
      throw ValidationError("missing key \"" + std::to_string(expected) + "\"");
    }
    if (*index < expected) {
      throw ValidationError("key \"" + entry.key + "\" is out of sequence");
    }
    if (trim(entry.value).empty()) {
      throw ValidationError("caption for key \"" + entry.key + "\" is empty");
    }
    doc.captions.push_back(entry.value);
    ++expected;
  }
  if (doc.captions.size() < expected_frames) {
    throw ValidationError("missing key \"" + std::to_string(doc.captions.size() + 1) + "\"");
  }
  return doc;
}

std::string serialize_caption_document(const CaptionDocument& doc) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < doc.captions.size(); ++i) {
    out[std::to_string(i + 1)] = doc.captions[i];
  }
  return out.dump(4) + "\n";
}

CaptionDocument read_caption_file(const std::filesystem::path& path,
                                  std::size_t expected_frames) {
  return parse_caption_document(read_text(path), expected_frames);
}

void write_caption_file(const std::filesystem::path& path, const CaptionDocument& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  out << serialize_caption_document(doc);
}

Matrix PromptTrack::block(std::size_t frame) const {
  if (frame >= frames) {
    throw DimensionError("PromptTrack::block: frame out of range");
  }
  return blocks.row_block(frame * tokens, tokens);
}

PromptTrack PromptTrack::slice(std::size_t start, std::size_t count) const {
  if (start + count > frames) {
    throw DimensionError("PromptTrack::slice: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") exceeds " + std::to_string(frames) +
                         " frames");
  }
  PromptTrack out;
  out.frames = count;
  out.tokens = tokens;
  out.width = width;
  out.blocks = blocks.row_block(start * tokens, count * tokens);
  out.source = source;
  if (!raw.empty()) {
    out.raw.assign(raw.begin() + static_cast<std::ptrdiff_t>(start),
                   raw.begin() + static_cast<std::ptrdiff_t>(start + count));
  }
  return out;
}

PromptTrack PromptTrack::concat(const PromptTrack& head, const PromptTrack& tail) {
  if (head.tokens != tail.tokens || head.width != tail.width) {
    throw DimensionError("PromptTrack::concat: block shapes differ");
  }
  PromptTrack out;
  out.frames = head.frames + tail.frames;
  out.tokens = head.tokens;
  out.width = head.width;
  out.blocks = Matrix(out.frames * out.tokens, out.width);
  out.blocks.set_row_block(0, head.blocks);
  out.blocks.set_row_block(head.frames * head.tokens, tail.blocks);
  out.source = head.source;
  if (!head.raw.empty() && !tail.raw.empty()) {
    out.raw = head.raw;
    out.raw.insert(out.raw.end(), tail.raw.begin(), tail.raw.end());
  }
  return out;
}

namespace {

PromptTrack assemble(const std::vector<std::string>& captions, const TextEmbedder& embedder,
                     std::size_t tokens, PromptSource source) {
  PromptTrack track;
  track.frames = captions.size();
  track.tokens = tokens;
  track.source = source;
  track.raw = captions;
  for (std::size_t f = 0; f < captions.size(); ++f) {
    const Matrix block = embedder(captions[f]);
    if (f == 0) {
      track.width = block.cols();
      track.blocks = Matrix(track.frames * tokens, track.width);
    }
    if (block.rows() != tokens || block.cols() != track.width) {
      throw ContractError("embedder returned " + std::to_string(block.rows()) + "x" +
                          std::to_string(block.cols()) + " for caption " + std::to_string(f + 1) +
                          ", expected " + std::to_string(tokens) + "x" +
                          std::to_string(track.width));
    }
    if (!all_finite(block)) {
      throw ContractError("embedder returned non-finite values");
    }
    track.blocks.set_row_block(f * tokens, block);
  }
  return track;
}

}  // namespace

PromptTrack build_prompt_track(const CaptionDocument& doc, const TextEmbedder& embedder,
                               std::size_t tokens) {
  return assemble(doc.captions, embedder, tokens, PromptSource::kFrameLevel);
}

PromptTrack replicate_global_prompt(const std::string& global_caption, std::size_t frames,
                                    const TextEmbedder& embedder, std::size_t tokens) {
  if (frames == 0) {
    throw ContractError("replicate_global_prompt: need at least one frame");
  }
  return assemble(std::vector<std::string>(frames, global_caption), embedder, tokens,
                  PromptSource::kVideoLevelReplicated);
}

PromptTemplate load_template(const std::filesystem::path& path, TemplateKind kind) {
  return PromptTemplate{read_text(path), kind};
}

PromptTemplate load_builtin_template(const std::filesystem::path& template_dir,
                                     TemplateKind kind) {
  const char* file =
      kind == TemplateKind::kCaptioning ? "frame_captioning.txt" : "global_to_frame.txt";
  return load_template(template_dir / file, kind);
}

std::string render_template(const PromptTemplate& tmpl, std::size_t count,
                            const std::optional<std::string>& global_prompt) {
  if (count < 1) {
    throw TemplateError("render_template: count must be >= 1");
  }
  std::string out = tmpl.body;
  const std::string n = std::to_string(count);
  if (tmpl.kind == TemplateKind::kCaptioning) {
    if (out.find("{{NUM_FRAMES}}") == std::string::npos) {
      throw TemplateError("captioning template lacks {{NUM_FRAMES}}");
    }
    replace_all(out, "{{NUM_FRAMES}}", n);
  } else {
    if (out.find("{{NUM_PROMPTS}}") == std::string::npos ||
        out.find("{{GLOBAL_PROMPT}}") == std::string::npos) {
      throw TemplateError("conversion template lacks {{NUM_PROMPTS}} or {{GLOBAL_PROMPT}}");
    }
    if (!global_prompt || trim(*global_prompt).empty()) {
      throw TemplateError("conversion template needs a global prompt");
    }
    replace_all(out, "{{NUM_PROMPTS}}", n);
  }
  // The user's prompt is inserted last so braces inside it are not mistaken
  // for placeholders.
  const std::string marker = "{{GLOBAL_PROMPT}}";
  std::string probe = out;
  replace_all(probe, marker, "");
  if (const auto pos = probe.find("{{"); pos != std::string::npos) {
    const auto end = probe.find("}}", pos);
    throw TemplateError("unsubstituted placeholder " +
                        probe.substr(pos, end == std::string::npos ? 16 : end + 2 - pos));
  }
  if (tmpl.kind == TemplateKind::kConversion) {
    replace_all(out, marker, *global_prompt);
  }
  return out;
}

}  // namespace driftless
