#pragma once

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "curator/corpus.hpp"
#include "curator/inference.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("curator-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline curator::ParallelRecord record(std::string id, std::string src, std::string tgt, std::string source_text,
                                      std::string reference) {
  curator::ParallelRecord r;
  r.id = std::move(id);
  r.direction = curator::Direction::make(std::move(src), std::move(tgt));
  r.granularity = curator::Granularity::sentence;
  r.source_text = std::move(source_text);
  r.translations.push_back({"gold", curator::PromptVariant::reference, std::move(reference)});
  return r;
}

/// Echo-scoring completions body, the shape OpenAI-compatible servers return.
inline std::string score_body(const std::vector<std::string>& tokens, const std::vector<std::optional<double>>& logprobs) {
  nlohmann::json lp = nlohmann::json::array();
  for (const auto& v : logprobs) lp.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  nlohmann::json j = {{"object", "text_completion"},
                      {"choices", {{{"index", 0}, {"text", ""}, {"logprobs", {{"tokens", tokens}, {"token_logprobs", lp}}}}}}};
  return j.dump();
}

inline std::string chat_body(const std::string& content) {
  nlohmann::json j = {{"object", "chat.completion"},
                      {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}}}};
  return j.dump();
}

/// httplib server on an ephemeral loopback port, serving on a background thread.
class StubServer {
 public:
  StubServer() = default;
  ~StubServer() { stop(); }

  httplib::Server& server() { return server_; }

  void start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

/// Transport that fails the test run if anything reaches the network layer.
class ForbiddenTransport final : public curator::Transport {
 public:
  curator::HttpResponse post(const std::string& url, const std::string&, const std::optional<std::string>&,
                             std::chrono::milliseconds) override {
    throw std::logic_error("network access attempted: " + url);
  }
};

/// Adds the recorded answer for a single-user-message chat call.
inline void record_chat(curator::ReplayStore& store, const curator::EndpointConfig& cfg, const std::string& prompt,
                        const std::string& answer) {
  const auto body = curator::chat_request_body(cfg, {{"user", prompt}});
  store.add(curator::request_hash(cfg.base_url + "/chat/completions", cfg.model_id, body), chat_body(answer));
}

inline void record_score(curator::ReplayStore& store, const curator::EndpointConfig& cfg, const std::string& text,
                         const std::vector<std::string>& tokens, const std::vector<std::optional<double>>& logprobs) {
  const auto body = curator::score_request_body(cfg, text);
  store.add(curator::request_hash(cfg.base_url + "/completions", cfg.model_id, body), score_body(tokens, logprobs));
}

inline curator::EndpointConfig fast_config(std::string base_url, std::string model = "test-model") {
  curator::EndpointConfig cfg;
  cfg.base_url = std::move(base_url);
  cfg.model_id = std::move(model);
  cfg.timeout = std::chrono::milliseconds(5000);
  cfg.backoff_base = std::chrono::milliseconds(1);
  cfg.backoff_cap = std::chrono::milliseconds(5);
  return cfg;
}

}  // namespace testing
