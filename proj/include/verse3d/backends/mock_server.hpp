#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace verse3d {

struct MockServerOptions {
  std::uint64_t seed = 0;
  /// Optional scripted LLM transcript; unknown requests fall back to the
  /// procedural LLM.
  std::filesystem::path transcript;
  /// When non-empty, requests must carry "Authorization: Bearer <token>".
  std::string required_token;
  /// Every route answers 503 to its first `fail_first` requests.
  int fail_first = 0;
  /// Added to every depth value before encoding (negative values exercise
  /// client-side clamping).
  double depth_offset = 0.0;
  /// t2i prompts containing this substring are refused (HTTP 451).
  std::string refuse_substring;
};

/// The mock backends behind the documented /v1 wire contract.
class MockServer {
 public:
  explicit MockServer(MockServerOptions options = {});
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop() is called from elsewhere.
  void listen(const std::string& host, int port);
  void stop();

  int port() const noexcept { return port_; }
  std::string base_url() const;
  /// Requests received across all routes, including rejected ones.
  std::size_t request_count() const noexcept { return requests_.load(); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::atomic<std::size_t> requests_{0};
  std::string host_;
  int port_ = 0;
};

}  // namespace verse3d
