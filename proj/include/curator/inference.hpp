#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "curator/error.hpp"

namespace curator {

/// Connection settings for one remote model endpoint.
struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model_id;
  std::optional<std::string> api_key;
  int max_concurrency = 4;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds backoff_cap{30000};
  double temperature = 0.0;

  /// Throws ParameterError on max_concurrency < 1, non-positive timeout,
  /// negative retries or an unparsable base_url.
  void validate() const;
  /// Fills api_key from CURATOR_API_KEY when unset.
  EndpointConfig& with_env_key();
};

struct ChatMessage {
  std::string role;
  std::string content;
};

/// One token of an echo-scored text. The first token of echo scoring usually
/// has no logprob.
struct TokenScore {
  std::string token_text;
  std::optional<double> logprob;

  bool operator==(const TokenScore&) const = default;
};

class InferenceError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Transport

struct HttpResponse {
  int status = 0;  // 0 means the connection itself failed
  std::string body;
  std::optional<double> retry_after_seconds;
  std::string error;  // transport-level failure description
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& url, const std::string& body,
                            const std::optional<std::string>& bearer, std::chrono::milliseconds timeout) = 0;
};

/// Plain HTTP(S) over cpp-httplib.
class HttpTransport final : public Transport {
 public:
  HttpResponse post(const std::string& url, const std::string& body, const std::optional<std::string>& bearer,
                    std::chrono::milliseconds timeout) override;
};

// ---------------------------------------------------------------------------
// Request identity, cache and replay

/// Canonical request body: compact JSON with keys sorted.
std::string canonical_body(const nlohmann::json& body);
/// SHA-256 over endpoint URL, model id and canonical body.
std::string request_hash(std::string_view url, std::string_view model_id, const nlohmann::json& body);

/// One file per request hash under a directory.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);
  std::optional<std::string> get(const std::string& hash) const;
  void put(const std::string& hash, const std::string& response_body) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

/// Recorded request-hash -> response-body table.
class ReplayStore {
 public:
  /// Parses JSONL of {"request_hash", "response_body"}; throws on malformed lines.
  static ReplayStore load(const std::filesystem::path& path);
  static ReplayStore parse(std::string_view jsonl);

  void add(std::string hash, std::string response_body);
  std::optional<std::string> find(const std::string& hash) const;
  std::size_t size() const { return entries_.size(); }
  std::string to_jsonl() const;

 private:
  std::unordered_map<std::string, std::string> entries_;
  std::vector<std::string> order_;
};

/// Appends live responses as replay fixture lines.
class ReplayRecorder {
 public:
  explicit ReplayRecorder(std::filesystem::path path);
  void record(const std::string& hash, const std::string& response_body);

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Client

/// Counting semaphore with a runtime bound.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(int limit) : limit_(limit) {}
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int limit_;
  int in_flight_ = 0;
};

struct ClientOptions {
  std::optional<std::filesystem::path> cache_dir;
  std::shared_ptr<ReplayRecorder> recorder;
  std::uint64_t jitter_seed = 0;
};

/// Chat completion and token scoring against an OpenAI-compatible endpoint,
/// with retry, caching and bounded concurrency. Safe for concurrent use.
class InferenceClient {
 public:
  InferenceClient(EndpointConfig cfg, std::shared_ptr<Transport> transport, ClientOptions opts = {});

  /// Client that answers only from recorded fixtures and never touches the network.
  static InferenceClient with_replay(EndpointConfig cfg, const std::filesystem::path& fixture);
  static InferenceClient with_replay(EndpointConfig cfg, ReplayStore store);

  std::string chat_complete(const std::vector<ChatMessage>& messages) const;
  std::vector<TokenScore> score_text(std::string_view text) const;

  /// Generic POST of a JSON body to `{base_url}{route}` through the retry,
  /// cache and replay machinery.
  nlohmann::json post_json(std::string_view route, const nlohmann::json& body, bool cacheable = true) const;

  const EndpointConfig& config() const { return cfg_; }
  bool replay_mode() const { return replay_ != nullptr; }

  struct Counters {
    std::atomic<int> attempts{0};
    std::atomic<int> cache_hits{0};
    std::atomic<int> replay_hits{0};
  };
  const Counters& counters() const { return *counters_; }

 private:
  InferenceClient(EndpointConfig cfg, std::shared_ptr<const ReplayStore> replay);
  std::string send_with_retry(const std::string& url, const std::string& body) const;
  std::chrono::milliseconds backoff_delay(int retry_index) const;

  EndpointConfig cfg_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<const ReplayStore> replay_;
  std::optional<ResponseCache> cache_;
  std::shared_ptr<ReplayRecorder> recorder_;
  std::shared_ptr<ConcurrencyLimiter> limiter_;
  std::shared_ptr<Counters> counters_;
  std::shared_ptr<std::mutex> rng_mu_;
  std::shared_ptr<std::uint64_t> rng_state_;
};

/// OpenAI chat-completions request body.
nlohmann::json chat_request_body(const EndpointConfig& cfg, const std::vector<ChatMessage>& messages);
/// Echo-scoring completions request body (echo, logprobs=1, max_tokens=0).
nlohmann::json score_request_body(const EndpointConfig& cfg, std::string_view text);

/// Response parsers, exposed for fixture tooling and tests.
std::string parse_chat_response(const std::string& body);
std::vector<TokenScore> parse_score_response(const std::string& body);

}  // namespace curator
