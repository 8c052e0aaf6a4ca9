#include "verse3d/backends/http.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <spdlog/spdlog.h>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/hash.hpp"
#include "verse3d/core/image_io.hpp"
#include "verse3d/geometry/panorama.hpp"

#include <httplib.h>

namespace verse3d {

namespace {

using nlohmann::json;

template <typename T>
T field(const json& j, const char* name, const std::string& path) {
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw ProtocolError(path + ": response lacks a valid '" + name + "' field");
  }
}

}  // namespace

void BackendEndpoint::validate() const {
  if (base_url.rfind("http://", 0) != 0) throw ConfigError("base_url: must start with http://");
  if (!(timeout_s > 0.0)) throw ConfigError("timeout_s: must be > 0");
  if (retries < 0) throw ConfigError("retries: must be >= 0");
  if (!(backoff_initial_s >= 0.0)) throw ConfigError("backoff_initial_s: must be >= 0");
}

json BackendEndpoint::to_json() const {
  return {{"base_url", base_url}, {"token_env", token_env}, {"timeout_s", timeout_s},
          {"retries", retries},   {"backoff_initial_s", backoff_initial_s}, {"model", model}};
}

BackendEndpoint BackendEndpoint::from_json(const json& j) {
  BackendEndpoint e;
  e.base_url = j.value("base_url", e.base_url);
  e.token_env = j.value("token_env", e.token_env);
  e.timeout_s = j.value("timeout_s", e.timeout_s);
  e.retries = j.value("retries", e.retries);
  e.backoff_initial_s = j.value("backoff_initial_s", e.backoff_initial_s);
  e.model = j.value("model", e.model);
  return e;
}

HttpJsonClient::HttpJsonClient(BackendEndpoint endpoint, WireTrace trace)
    : endpoint_(std::move(endpoint)), trace_(std::move(trace)) {
  endpoint_.validate();
  std::string rest = endpoint_.base_url.substr(7);
  const auto slash = rest.find('/');
  if (slash != std::string::npos) {
    prefix_ = rest.substr(slash);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    rest = rest.substr(0, slash);
  }
  const auto colon = rest.rfind(':');
  host_ = rest.substr(0, colon);
  if (colon != std::string::npos) {
    try {
      port_ = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("base_url: invalid port in " + endpoint_.base_url);
    }
  }
  if (host_.empty()) throw ConfigError("base_url: missing host");
}

std::string HttpJsonClient::identifier() const {
  return endpoint_.base_url + (endpoint_.model.empty() ? "" : "#" + endpoint_.model);
}

json HttpJsonClient::post(const std::string& path, const json& body) const {
  httplib::Headers headers;
  if (!endpoint_.token_env.empty()) {
    const char* token = std::getenv(endpoint_.token_env.c_str());
    if (token == nullptr) {
      throw ConfigError("token_env: environment variable " + endpoint_.token_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  json request = body;
  if (!endpoint_.model.empty() && !request.contains("model")) request["model"] = endpoint_.model;
  const std::string payload = request.dump();
  const auto timeout = std::chrono::duration<double>(endpoint_.timeout_s);
  const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(timeout);

  double backoff = endpoint_.backoff_initial_s;
  for (int attempt = 0;; ++attempt) {
    httplib::Client cli(host_, port_);
    cli.set_connection_timeout(timeout_us);
    cli.set_read_timeout(timeout_us);
    cli.set_write_timeout(timeout_us);
    std::string failure;
    bool retryable = true;
    int status = 0;
    if (auto res = cli.Post(prefix_ + path, headers, payload, "application/json")) {
      status = res->status;
      json parsed;
      try {
        parsed = json::parse(res->body);
      } catch (const json::exception&) {
        if (status == 200) throw ProtocolError(path + ": response body is not JSON");
      }
      const bool refusal = status == 451 || (parsed.is_object() && parsed.contains("error") &&
                                             parsed["error"].is_object() &&
                                             parsed["error"].value("type", "") == "refusal");
      if (refusal) {
        throw RefusalError(path + ": backend refused: " +
                           (parsed.is_object() && parsed.contains("error")
                                ? parsed["error"].value("message", std::string("content policy"))
                                : std::string("content policy")));
      }
      if (status == 200) {
        if (trace_) trace_(path, request, parsed);
        return parsed;
      }
      failure = path + ": HTTP " + std::to_string(status);
      if (parsed.is_object() && parsed.contains("error") && parsed["error"].is_object()) {
        failure += ": " + parsed["error"].value("message", std::string());
      }
      retryable = status == 429 || status >= 500;
    } else {
      failure = path + ": " + httplib::to_string(res.error());
    }
    if (!retryable) throw TransportError(failure, status, false);
    if (attempt >= endpoint_.retries) {
      throw TransportError(failure + " (after " + std::to_string(attempt + 1) + " attempts)",
                           status, true);
    }
    spdlog::warn("{}; retrying in {:.3f}s", failure, backoff);
    std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
    backoff *= 2.0;
  }
}

std::string image_to_b64(const ImageBuffer& img) { return base64_encode(encode_png(img)); }

ImageBuffer image_from_b64(const std::string& b64) { return decode_png(base64_decode(b64)); }

json messages_to_json(const std::vector<ChatMessage>& messages) {
  json arr = json::array();
  for (const ChatMessage& m : messages) arr.push_back({{"role", m.role}, {"content", m.content}});
  return arr;
}

std::vector<ChatMessage> messages_from_json(const json& j) {
  std::vector<ChatMessage> out;
  for (const json& m : j) out.push_back({m.at("role"), m.at("content")});
  return out;
}

json depth_to_wire(const ImageBuffer& depth) {
  const EncodedDepth e = encode_depth_png16(depth);
  return {{"depth_png16_b64", base64_encode(e.png)}, {"depth_scale", e.scale}, {"depth_offset", 0.0}};
}

ImageBuffer depth_from_wire(const json& j) {
  const auto b64 = field<std::string>(j, "depth_png16_b64", "/v1/depth");
  const auto scale = field<double>(j, "depth_scale", "/v1/depth");
  const double offset = j.value("depth_offset", 0.0);
  ImageBuffer depth;
  try {
    depth = decode_depth_png16(base64_decode(b64), scale);
  } catch (const ParseError& e) {
    throw ProtocolError(std::string("/v1/depth: ") + e.what());
  }
  std::size_t clamped = 0;
  for (double& v : depth.data()) {
    v += offset;
    if (!std::isfinite(v)) throw ProtocolError("/v1/depth: non-finite depth value");
    if (v < 0.0) {
      v = 0.0;
      ++clamped;
    }
  }
  if (clamped > 0) spdlog::warn("depth backend returned {} negative values; clamped to 0", clamped);
  return depth;
}

std::string HttpLlm::complete(const std::vector<ChatMessage>& messages) const {
  if (messages.empty()) throw DomainError("llm: empty message list");
  return field<std::string>(client_.post("/v1/llm", {{"messages", messages_to_json(messages)}}),
                            "text", "/v1/llm");
}

ImageResult HttpTextToImage::text_to_image(const std::string& prompt, std::uint64_t seed,
                                           int width, int height) const {
  if (width != height) throw DomainError("t2i: only square outputs are supported");
  const json r = client_.post(
      "/v1/t2i", {{"prompt", prompt}, {"seed", seed}, {"width", width}, {"height", height}});
  ImageResult out;
  try {
    out.image = image_from_b64(field<std::string>(r, "image_png_b64", "/v1/t2i"));
  } catch (const ParseError& e) {
    throw ProtocolError(std::string("/v1/t2i: ") + e.what());
  }
  if (out.image.width() != width || out.image.height() != height) {
    throw ProtocolError("/v1/t2i: backend returned wrong dimensions");
  }
  if (r.contains("metadata") && r["metadata"].is_object()) {
    for (const auto& [k, v] : r["metadata"].items()) out.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return out;
}

int HttpTextToImage::count_tokens(const std::string& text) const {
  return field<int>(client_.post("/v1/t2i/tokenize", {{"prompt", text}}), "token_count",
                    "/v1/t2i/tokenize");
}

double outpaint_preservation_psnr(const ImageBuffer& face, const PanoImage& pano) {
  const int size = pano.height() / 2;
  const CubeMap cube = pano_to_cubemap(pano, size);
  return psnr(resize_bicubic(face, size, size), cube.central());
}

PanoImage HttpOutpaint::outpaint(const OutpaintRequest& request) const {
  request.validate();
  const ImageBuffer face = request.central_face.width() == kOutpaintFaceSize
                               ? request.central_face
                               : resize_bicubic(request.central_face, kOutpaintFaceSize, kOutpaintFaceSize);
  const json r = client_.post("/v1/outpaint", {{"prompt", request.prompt},
                                               {"seed", request.seed},
                                               {"width", request.width},
                                               {"height", request.height},
                                               {"central_face_png_b64", image_to_b64(clamp01(face))},
                                               {"mask_png_b64", image_to_b64(request.mask)}});
  ImageBuffer img;
  try {
    img = image_from_b64(field<std::string>(r, "image_png_b64", "/v1/outpaint"));
  } catch (const ParseError& e) {
    throw ProtocolError(std::string("/v1/outpaint: ") + e.what());
  }
  if (img.width() != request.width || img.height() != request.height || img.channels() != 3) {
    throw ProtocolError("/v1/outpaint: backend returned wrong dimensions");
  }
  PanoImage pano(std::move(img));
  const double p = outpaint_preservation_psnr(face, pano);
  if (p < 30.0) spdlog::warn("outpaint backend did not preserve the central face (PSNR {:.2f} dB)", p);
  return pano;
}

PanoImage HttpDepth::estimate_depth(const PanoImage& pano) const {
  const json r = client_.post("/v1/depth", {{"image_png_b64", image_to_b64(pano.buffer())}});
  ImageBuffer depth = depth_from_wire(r);
  if (depth.width() != pano.width() || depth.height() != pano.height()) {
    throw ProtocolError("/v1/depth: backend returned wrong dimensions");
  }
  return PanoImage(std::move(depth));
}

ImageBuffer HttpEnhance::enhance(const ImageBuffer& image, int scale) const {
  check_enhance_scale(scale);
  const json r = client_.post("/v1/enhance", {{"image_png_b64", image_to_b64(image)}, {"scale", scale}});
  ImageBuffer out;
  try {
    out = image_from_b64(field<std::string>(r, "image_png_b64", "/v1/enhance"));
  } catch (const ParseError& e) {
    throw ProtocolError(std::string("/v1/enhance: ") + e.what());
  }
  if (out.width() != image.width() * scale || out.height() != image.height() * scale) {
    throw ProtocolError("/v1/enhance: backend returned wrong dimensions");
  }
  return out;
}

double HttpVqa::yes_probability(const VqaQuery& q) const {
  q.validate();
  const json r = client_.post("/v1/vqa", {{"image_png_b64", image_to_b64(q.image)}, {"question", q.question()}});
  return check_probability(field<double>(r, "yes_probability", "/v1/vqa"));
}

double HttpQalign::quality(const ImageBuffer& image) const {
  const json r = client_.post("/v1/qalign", {{"image_png_b64", image_to_b64(image)}});
  const double s = field<double>(r, "score", "/v1/qalign");
  if (!std::isfinite(s)) throw ProtocolError("/v1/qalign: non-finite score");
  return s;
}

}  // namespace verse3d
