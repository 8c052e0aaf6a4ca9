#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "verse3d/backends/backends.hpp"

namespace verse3d {

// Seeded mocks. Each output is a pure function of (request, seed), so runs
// are byte-identical across machines.

/// Smooth lattice value noise in [0, 1): `octaves` layers of smoothstep-
/// interpolated hashed values, the first with cell size `cell` pixels.
double value_noise(std::uint64_t seed, double x, double y, double cell, int octaves = 4);

/// Procedural RGB image seeded by `seed`.
ImageBuffer procedural_image(std::uint64_t seed, int width, int height, double cell = 64.0);

/// Canonical key of an LLM request: SHA-256 of the compact JSON message list.
std::string llm_request_key(const std::vector<ChatMessage>& messages);

/// Replays canned responses keyed by llm_request_key. In strict mode an
/// unknown request throws NotFoundError; otherwise it is forwarded to the
/// fallback backend.
class ScriptedLlm final : public LlmBackend {
 public:
  explicit ScriptedLlm(std::map<std::string, std::string> transcript,
                       std::shared_ptr<const LlmBackend> fallback = nullptr);
  /// JSON file {"format": "verse3d-llm-transcript-1", "entries": [{"key", "response"}]}.
  static ScriptedLlm from_file(const std::filesystem::path& path,
                               std::shared_ptr<const LlmBackend> fallback = nullptr);

  std::string complete(const std::vector<ChatMessage>& messages) const override;
  std::string identifier() const override { return "mock:scripted-llm"; }
  bool strict() const noexcept { return fallback_ == nullptr; }
  const std::map<std::string, std::string>& transcript() const noexcept { return transcript_; }

 private:
  std::map<std::string, std::string> transcript_;
  std::shared_ptr<const LlmBackend> fallback_;
};

void save_transcript(const std::filesystem::path& path,
                     const std::map<std::string, std::string>& transcript);

/// Deterministic stand-in for arbitrary verses. Recognizes the schema tag of
/// the parser templates in the last user message and answers with a well-
/// formed block assembled from the verse's own words.
class ProceduralLlm final : public LlmBackend {
 public:
  explicit ProceduralLlm(std::uint64_t seed = 0) : seed_(seed) {}
  std::string complete(const std::vector<ChatMessage>& messages) const override;
  std::string identifier() const override { return "mock:procedural-llm"; }

 private:
  std::uint64_t seed_;
};

/// Records every exchange of a wrapped backend (for building transcripts).
class RecordingLlm final : public LlmBackend {
 public:
  explicit RecordingLlm(std::shared_ptr<const LlmBackend> inner) : inner_(std::move(inner)) {}
  std::string complete(const std::vector<ChatMessage>& messages) const override;
  std::string identifier() const override { return inner_->identifier(); }
  std::map<std::string, std::string> transcript() const;

 private:
  std::shared_ptr<const LlmBackend> inner_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::string> transcript_;
};

/// Mock tokenizer: one token per alphanumeric run and per punctuation mark.
int mock_token_count(const std::string& text);

class MockTextToImage final : public TextToImageBackend {
 public:
  ImageResult text_to_image(const std::string& prompt, std::uint64_t seed, int width,
                            int height) const override;
  int count_tokens(const std::string& text) const override { return mock_token_count(text); }
  std::string identifier() const override { return "mock:t2i"; }
};

/// Central-face pixels are bilinear samples of the conditioning face; the
/// rest is procedural noise seeded by (seed, prompt).
class MockOutpaint final : public OutpaintBackend {
 public:
  PanoImage outpaint(const OutpaintRequest& request) const override;
  std::string identifier() const override { return "mock:outpaint"; }
};

/// Smooth seeded depth: a horizon band farther than the poles, modulated by
/// value noise. Depends only on (seed, dims).
class MockDepth final : public DepthBackend {
 public:
  explicit MockDepth(std::uint64_t seed = 0) : seed_(seed) {}
  PanoImage estimate_depth(const PanoImage& pano) const override;
  std::string identifier() const override { return "mock:depth"; }

 private:
  std::uint64_t seed_;
};

/// Bicubic upscale followed by an unsharp mask (amount 0.5, sigma 1).
class MockEnhance final : public EnhanceBackend {
 public:
  ImageBuffer enhance(const ImageBuffer& image, int scale) const override;
  std::string identifier() const override { return "mock:enhance"; }
};

/// Probability derived from hashes of the statement and the image samples.
class MockVqa final : public VqaBackend {
 public:
  explicit MockVqa(std::uint64_t seed = 0) : seed_(seed) {}
  double yes_probability(const VqaQuery& query) const override;
  std::string identifier() const override { return "mock:vqa"; }

 private:
  std::uint64_t seed_;
};

/// Score in [1, 5] derived from a hash of the image samples.
class MockQalign final : public QalignBackend {
 public:
  explicit MockQalign(std::uint64_t seed = 0) : seed_(seed) {}
  double quality(const ImageBuffer& image) const override;
  std::string identifier() const override { return "mock:qalign"; }

 private:
  std::uint64_t seed_;
};

}  // namespace verse3d
