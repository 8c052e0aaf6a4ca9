#include "verse3d/backends/mock_server.hpp"

#include <map>
#include <mutex>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "verse3d/backends/http.hpp"
#include "verse3d/backends/mock.hpp"
#include "verse3d/core/errors.hpp"

#include <httplib.h>

namespace verse3d {

namespace {

using nlohmann::json;

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json error_body(const std::string& type, const std::string& message) {
  return {{"error", {{"type", type}, {"message", message}}}};
}

}  // namespace

struct MockServer::Impl {
  MockServerOptions options;
  std::shared_ptr<const LlmBackend> llm;
  MockTextToImage t2i;
  MockOutpaint outpaint;
  MockDepth depth;
  MockEnhance enhance;
  MockVqa vqa;
  MockQalign qalign;
  std::mutex mutex;
  std::map<std::string, int> hits;

  explicit Impl(MockServerOptions o)
      : options(std::move(o)), depth(options.seed), vqa(options.seed), qalign(options.seed) {
    auto procedural = std::make_shared<ProceduralLlm>(options.seed);
    if (options.transcript.empty()) {
      llm = procedural;
    } else {
      llm = std::make_shared<ScriptedLlm>(ScriptedLlm::from_file(options.transcript, procedural));
    }
  }

  // Returns false (and fills `res`) when the request must be rejected before
  // reaching the handler.
  bool admit(const std::string& route, const httplib::Request& req, httplib::Response& res) {
    if (!options.required_token.empty() &&
        req.get_header_value("Authorization") != "Bearer " + options.required_token) {
      reply(res, 401, error_body("auth", "missing or invalid bearer token"));
      return false;
    }
    std::lock_guard lock(mutex);
    if (hits[route]++ < options.fail_first) {
      reply(res, 503, error_body("unavailable", "injected transient failure"));
      return false;
    }
    return true;
  }

  json handle(const std::string& route, const json& body) {
    if (route == "/v1/llm") {
      return {{"text", llm->complete(messages_from_json(body.at("messages")))}};
    }
    if (route == "/v1/t2i") {
      const std::string prompt = body.at("prompt");
      if (!options.refuse_substring.empty() && prompt.find(options.refuse_substring) != std::string::npos) {
        throw RefusalError("prompt rejected by content policy");
      }
      const ImageResult r = t2i.text_to_image(prompt, body.at("seed"), body.at("width"), body.at("height"));
      return {{"image_png_b64", image_to_b64(r.image)}, {"metadata", r.metadata}};
    }
    if (route == "/v1/t2i/tokenize") return {{"token_count", t2i.count_tokens(body.at("prompt"))}};
    if (route == "/v1/outpaint") {
      OutpaintRequest req;
      req.central_face = image_from_b64(body.at("central_face_png_b64"));
      req.mask = image_from_b64(body.at("mask_png_b64"));
      req.prompt = body.at("prompt");
      req.seed = body.at("seed");
      req.width = body.at("width");
      req.height = body.at("height");
      return {{"image_png_b64", image_to_b64(outpaint.outpaint(req).buffer())}};
    }
    if (route == "/v1/depth") {
      const PanoImage pano(image_from_b64(body.at("image_png_b64")));
      const PanoImage d = depth.estimate_depth(pano);
      json wire = depth_to_wire(d.buffer());
      wire["depth_offset"] = options.depth_offset;
      return wire;
    }
    if (route == "/v1/enhance") {
      return {{"image_png_b64",
               image_to_b64(enhance.enhance(image_from_b64(body.at("image_png_b64")), body.at("scale")))}};
    }
    if (route == "/v1/vqa") {
      // The question arrives pre-formatted; recover the statement for the mock.
      const std::string q = body.at("question");
      const std::string head = "Does this image show '";
      const std::string tail = "'? Please answer 'yes' or 'no'.";
      if (q.rfind(head, 0) != 0 || q.size() < head.size() + tail.size() ||
          q.compare(q.size() - tail.size(), tail.size(), tail) != 0) {
        throw DomainError("question does not follow the yes/no template");
      }
      VqaQuery query{image_from_b64(body.at("image_png_b64")),
                     q.substr(head.size(), q.size() - head.size() - tail.size())};
      return {{"yes_probability", vqa.yes_probability(query)}};
    }
    if (route == "/v1/qalign") return {{"score", qalign.quality(image_from_b64(body.at("image_png_b64")))}};
    throw NotFoundError("unknown route " + route);
  }
};

MockServer::MockServer(MockServerOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))), server_(std::make_unique<httplib::Server>()) {
  for (const char* route : {"/v1/llm", "/v1/t2i", "/v1/t2i/tokenize", "/v1/outpaint", "/v1/depth",
                            "/v1/enhance", "/v1/vqa", "/v1/qalign"}) {
    const std::string r = route;
    server_->Post(route, [this, r](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      if (!impl_->admit(r, req, res)) return;
      try {
        reply(res, 200, impl_->handle(r, json::parse(req.body)));
      } catch (const RefusalError& e) {
        reply(res, 451, error_body("refusal", e.what()));
      } catch (const json::exception& e) {
        reply(res, 400, error_body("bad_request", e.what()));
      } catch (const Error& e) {
        reply(res, 400, error_body("bad_request", e.what()));
      }
    });
  }
  server_->Get("/health", [](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"status", "ok"}});
  });
}

MockServer::~MockServer() { stop(); }

int MockServer::start(const std::string& host, int port) {
  host_ = host;
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw TransportError("mock server: cannot bind " + host + ":" + std::to_string(port), 0, false);
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void MockServer::listen(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!server_->listen(host, port)) {
    throw TransportError("mock server: cannot listen on " + host + ":" + std::to_string(port), 0, false);
  }
}

void MockServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace verse3d
