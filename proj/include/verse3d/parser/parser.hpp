#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "verse3d/backends/backends.hpp"
#include "verse3d/core/errors.hpp"

namespace verse3d {

/// Token budget of the image backend's text encoder.
inline constexpr int kPromptTokenBudget = 225;

struct HaikuInput {
  std::string id;
  std::string text;
  std::string language;  // optional hint, e.g. "ja"

  void validate() const;  // DomainError on empty text or id
};

/// Sample verses shipped in assets/haiku/samples.json.
std::vector<HaikuInput> load_haiku_samples(const std::filesystem::path& path);
HaikuInput find_haiku(const std::vector<HaikuInput>& samples, const std::string& id);

struct StageOneAnalysis {
  std::string translation;
  std::string cultural_context;
  std::string appreciation;
  std::optional<std::string> attributed_poet;

  void validate() const;
  nlohmann::json to_json() const;
  static StageOneAnalysis from_json(const nlohmann::json& j);
  bool operator==(const StageOneAnalysis&) const = default;
};

struct KeyElement {
  std::string phrase;
  std::string symbolic_note;
  bool operator==(const KeyElement&) const = default;
};

struct KeyElements {
  std::vector<KeyElement> elements;
  std::vector<std::string> emotional_themes;

  /// At least one element; phrases non-empty and distinct.
  void validate() const;
  nlohmann::json to_json() const;
  static KeyElements from_json(const nlohmann::json& j);
  bool operator==(const KeyElements&) const = default;
};

/// Drops repeated phrases (after trimming), keeping the first occurrence.
KeyElements deduplicate(KeyElements elements);

struct EnhancedPrompt {
  std::string text;
  int token_count = 0;
  bool key_elements_appended = false;

  nlohmann::json to_json() const;
  static EnhancedPrompt from_json(const nlohmann::json& j);
  bool operator==(const EnhancedPrompt&) const = default;
};

/// Prompt templates loaded from a directory (system.txt, stage1.txt,
/// stage2.txt, stage3.txt, tighten.txt, repair.txt, VERSION).
struct PromptTemplates {
  std::string version;
  std::string system;
  std::string stage1;
  std::string stage2;
  std::string stage3;
  std::string tighten;
  std::string repair;

  static PromptTemplates load(const std::filesystem::path& dir);
};

/// Replaces every {{name}}; ConfigError on a placeholder without a value.
std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& vars);

/// Body of the first ```tag fenced block, if any.
std::optional<std::string> extract_tagged_block(const std::string& text, const std::string& tag);

/// Uses `primary` and falls back to the local estimate when it throws a
/// TransportError. A null primary always estimates locally.
class FallbackTokenCounter final : public TokenCounter {
 public:
  explicit FallbackTokenCounter(std::shared_ptr<const TokenCounter> primary)
      : primary_(std::move(primary)) {}
  int count_tokens(const std::string& text) const override;

 private:
  std::shared_ptr<const TokenCounter> primary_;
  LocalTokenEstimate local_;
};

struct ParserOptions {
  /// Re-requests after an unparseable or schema-violating response.
  int max_retries = 2;
  int token_budget = kPromptTokenBudget;
};

/// Raised when every attempt failed to parse; carries the last raw response.
class UnparseableResponseError : public ParseError {
 public:
  UnparseableResponseError(const std::string& what, std::string raw)
      : ParseError(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

StageOneAnalysis stage1_translate_appreciate(const HaikuInput& haiku, const LlmBackend& llm,
                                             const PromptTemplates& templates,
                                             const ParserOptions& opts = {});

KeyElements stage2_extract_elements(const StageOneAnalysis& analysis, const LlmBackend& llm,
                                    const PromptTemplates& templates, const ParserOptions& opts = {});

/// The returned prompt always satisfies token_count <= budget: an over-budget
/// answer is re-requested once with the tighten template, then truncated at a
/// sentence boundary.
EnhancedPrompt stage3_enhance(const StageOneAnalysis& analysis, const KeyElements& elements,
                              const LlmBackend& llm, const TokenCounter& counter,
                              const PromptTemplates& templates, const ParserOptions& opts = {});

/// Longest prefix of whole sentences within `budget` tokens. When not even the
/// first sentence fits, whole words are kept and a period appended.
std::string truncate_to_budget(const std::string& text, const TokenCounter& counter, int budget);

/// " [must include: e1, e2, ...]"
std::string elements_clause(const KeyElements& elements);

/// Appends the elements clause unless already present. The prompt body is
/// truncated as needed so the result fits the budget; DomainError when the
/// clause alone does not fit.
EnhancedPrompt inject_key_elements(const EnhancedPrompt& prompt, const KeyElements& elements,
                                   const TokenCounter& counter, int budget = kPromptTokenBudget);

/// The verse itself as a prompt (the path taken when LLM enhancement is
/// disabled).
EnhancedPrompt raw_haiku_prompt(const HaikuInput& haiku, const TokenCounter& counter,
                                int budget = kPromptTokenBudget);

struct ParseFlags {
  bool disable_enhancement = false;   // skip stage 3, use the raw verse
  bool disable_key_elements = false;  // skip injection
};

struct ParseResult {
  StageOneAnalysis analysis;
  KeyElements elements;
  std::optional<EnhancedPrompt> stage3;  // absent when enhancement is disabled
  EnhancedPrompt prompt;                 // what the image backends receive

  nlohmann::json to_json() const;
  static ParseResult from_json(const nlohmann::json& j);
  bool operator==(const ParseResult&) const = default;
};

/// stage1 -> stage2 -> stage3 -> inject, honoring the ablation flags. Stages 1
/// and 2 use `analysis_llm`, stage 3 uses `enhance_llm`.
ParseResult parse_haiku(const HaikuInput& haiku, const LlmBackend& analysis_llm,
                        const LlmBackend& enhance_llm, const TokenCounter& counter,
                        const PromptTemplates& templates, const ParseFlags& flags = {},
                        const ParserOptions& opts = {});

}  // namespace verse3d
