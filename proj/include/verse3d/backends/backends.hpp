#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "verse3d/core/image.hpp"

namespace verse3d {

// Client interfaces for the external models the pipeline consumes. Every
// interface has a seeded mock (mock.hpp) and an HTTP client (http.hpp).
// Implementations are immutable after construction and safe to share.

struct ChatMessage {
  std::string role;  // "system", "user" or "assistant"
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  /// Throws DomainError on an empty message list.
  virtual std::string complete(const std::vector<ChatMessage>& messages) const = 0;
  /// Backend/model identifier recorded in manifests.
  virtual std::string identifier() const = 0;
};

/// Counts prompt tokens with the image backend's text-encoder tokenizer.
class TokenCounter {
 public:
  virtual ~TokenCounter() = default;
  virtual int count_tokens(const std::string& text) const = 0;
};

/// Conservative local estimate used when no backend tokenizer is available:
/// every whitespace-separated word costs ceil(letters / 3) tokens plus one per
/// punctuation character.
class LocalTokenEstimate final : public TokenCounter {
 public:
  int count_tokens(const std::string& text) const override;
};

struct ImageResult {
  ImageBuffer image;
  /// Backend-reported stage metadata (upscaling passes and the like).
  std::map<std::string, std::string> metadata;
};

class TextToImageBackend : public TokenCounter {
 public:
  /// Square output only; throws DomainError otherwise.
  virtual ImageResult text_to_image(const std::string& prompt, std::uint64_t seed, int width,
                                    int height) const = 0;
  virtual std::string identifier() const = 0;
};

inline constexpr int kOutpaintFaceSize = 512;

/// Panorama outpainting conditioned on the central cube face.
struct OutpaintRequest {
  ImageBuffer central_face;  // square RGB; resized to 512 x 512 before dispatch
  ImageBuffer mask;          // pano-sized, 1 = synthesize, 0 = preserved central face
  std::string prompt;
  std::uint64_t seed = 0;
  int width = 1024;
  int height = 512;

  /// Throws DomainError unless the face is square RGB, the panorama is 2:1 and
  /// the mask equals central_face_mask(width, height) or is all ones.
  void validate() const;
};

class OutpaintBackend {
 public:
  virtual ~OutpaintBackend() = default;
  virtual PanoImage outpaint(const OutpaintRequest& request) const = 0;
  virtual std::string identifier() const = 0;
};

class DepthBackend {
 public:
  virtual ~DepthBackend() = default;
  /// Single-channel relative depth with the panorama's dimensions; negative
  /// backend values are clamped to zero with a warning.
  virtual PanoImage estimate_depth(const PanoImage& pano) const = 0;
  virtual std::string identifier() const = 0;
};

class EnhanceBackend {
 public:
  virtual ~EnhanceBackend() = default;
  /// Output dims are the input dims times `scale` (2 or 4).
  virtual ImageBuffer enhance(const ImageBuffer& image, int scale) const = 0;
  virtual std::string identifier() const = 0;
};

struct VqaQuery {
  ImageBuffer image;
  std::string statement;

  /// Does this image show '{statement}'? Please answer 'yes' or 'no'.
  std::string question() const;
  void validate() const;
};

class VqaBackend {
 public:
  virtual ~VqaBackend() = default;
  /// Probability of the answer "yes"; ProtocolError outside [0, 1].
  virtual double yes_probability(const VqaQuery& query) const = 0;
  virtual std::string identifier() const = 0;
};

class QalignBackend {
 public:
  virtual ~QalignBackend() = default;
  /// Quality-mode score as reported (roughly 1..5), never rescaled.
  virtual double quality(const ImageBuffer& image) const = 0;
  virtual std::string identifier() const = 0;
};

/// Throws DomainError unless scale is 2 or 4.
void check_enhance_scale(int scale);

/// Throws ProtocolError unless p is a probability.
double check_probability(double p);

}  // namespace verse3d
