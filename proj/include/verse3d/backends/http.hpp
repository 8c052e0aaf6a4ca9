#pragma once

#include <functional>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "verse3d/backends/backends.hpp"

namespace verse3d {

/// Where and how to reach one live backend.
struct BackendEndpoint {
  std::string base_url;   // e.g. http://127.0.0.1:8700
  std::string token_env;  // name of the env var holding the bearer token; empty = no auth
  double timeout_s = 60.0;
  int retries = 2;
  double backoff_initial_s = 0.25;  // doubled after every failed attempt
  std::string model;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static BackendEndpoint from_json(const nlohmann::json& j);
};

/// Called once per completed exchange with the request path and both bodies.
using WireTrace = std::function<void(const std::string& path, const nlohmann::json& request,
                                     const nlohmann::json& response)>;

/// JSON-over-HTTP POST with bearer auth, per-request timeouts and retries.
///
/// Connection failures, 429 and 5xx are retried at most `retries` times with
/// exponential backoff. Status 451 or an {"error": {"type": "refusal"}} body
/// raises RefusalError; other 4xx raise a non-retryable TransportError.
class HttpJsonClient {
 public:
  explicit HttpJsonClient(BackendEndpoint endpoint, WireTrace trace = {});
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;
  const BackendEndpoint& endpoint() const noexcept { return endpoint_; }
  std::string identifier() const;

 private:
  BackendEndpoint endpoint_;
  WireTrace trace_;
  std::string host_;
  int port_ = 80;
  std::string prefix_;
};

// Wire helpers shared by the clients and the mock server.
std::string image_to_b64(const ImageBuffer& img);
ImageBuffer image_from_b64(const std::string& b64);
nlohmann::json messages_to_json(const std::vector<ChatMessage>& messages);
std::vector<ChatMessage> messages_from_json(const nlohmann::json& j);
/// Decodes {"depth_png16_b64", "depth_scale", "depth_offset"?} and clamps
/// negative values to zero, logging a warning with the clamped count.
ImageBuffer depth_from_wire(const nlohmann::json& j);
nlohmann::json depth_to_wire(const ImageBuffer& depth);

class HttpLlm final : public LlmBackend {
 public:
  explicit HttpLlm(HttpJsonClient client) : client_(std::move(client)) {}
  std::string complete(const std::vector<ChatMessage>& messages) const override;
  std::string identifier() const override { return client_.identifier(); }

 private:
  HttpJsonClient client_;
};

class HttpTextToImage final : public TextToImageBackend {
 public:
  explicit HttpTextToImage(HttpJsonClient client) : client_(std::move(client)) {}
  ImageResult text_to_image(const std::string& prompt, std::uint64_t seed, int width,
                            int height) const override;
  /// POST /v1/t2i/tokenize.
  int count_tokens(const std::string& text) const override;
  std::string identifier() const override { return client_.identifier(); }

 private:
  HttpJsonClient client_;
};

/// Resizes the face to 512 x 512 before dispatch and logs a warning when the
/// returned panorama does not preserve it (re-extracted PSNR < 30 dB).
class HttpOutpaint final : public OutpaintBackend {
 public:
  explicit HttpOutpaint(HttpJsonClient client) : client_(std::move(client)) {}
  PanoImage outpaint(const OutpaintRequest& request) const override;
  std::string identifier() const override { return client_.identifier(); }

 private:
  HttpJsonClient client_;
};

class HttpDepth final : public DepthBackend {
 public:
  explicit HttpDepth(HttpJsonClient client) : client_(std::move(client)) {}
  PanoImage estimate_depth(const PanoImage& pano) const override;
  std::string identifier() const override { return client_.identifier(); }

 private:
  HttpJsonClient client_;
};

class HttpEnhance final : public EnhanceBackend {
 public:
  explicit HttpEnhance(HttpJsonClient client) : client_(std::move(client)) {}
  ImageBuffer enhance(const ImageBuffer& image, int scale) const override;
  std::string identifier() const override { return client_.identifier(); }

 private:
  HttpJsonClient client_;
};

class HttpVqa final : public VqaBackend {
 public:
  explicit HttpVqa(HttpJsonClient client) : client_(std::move(client)) {}
  double yes_probability(const VqaQuery& query) const override;
  std::string identifier() const override { return client_.identifier(); }

 private:
  HttpJsonClient client_;
};

class HttpQalign final : public QalignBackend {
 public:
  explicit HttpQalign(HttpJsonClient client) : client_(std::move(client)) {}
  double quality(const ImageBuffer& image) const override;
  std::string identifier() const override { return client_.identifier(); }

 private:
  HttpJsonClient client_;
};

/// PSNR between the conditioning face and the face re-extracted from the
/// panorama via pano_to_cubemap at the face's size.
double outpaint_preservation_psnr(const ImageBuffer& face, const PanoImage& pano);

}  // namespace verse3d
