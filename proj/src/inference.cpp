#include "curator/inference.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <regex>
#include <thread>

#include "curator/text.hpp"

namespace curator {

using nlohmann::json;

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

std::optional<ParsedUrl> parse_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/\s]+)(/[^\s]*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) return std::nullopt;
  ParsedUrl out{m[1].str(), m[2].matched ? m[2].str() : ""};
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

bool is_transient(int status) {
  return status == 0 || status == 408 || status == 429 || status == 500 || status == 502 || status == 503 ||
         status == 504;
}

std::string join_url(const std::string& base, std::string_view route) {
  auto b = base;
  while (!b.empty() && b.back() == '/') b.pop_back();
  return b + std::string(route);
}

}  // namespace

// ---------------------------------------------------------------------------

void EndpointConfig::validate() const {
  if (max_concurrency < 1) throw ParameterError("max_concurrency must be >= 1");
  if (timeout.count() <= 0) throw ParameterError("timeout must be > 0");
  if (max_retries < 0) throw ParameterError("max_retries must be >= 0");
  if (backoff_base.count() < 0 || backoff_cap.count() < 0) throw ParameterError("backoff must be >= 0");
  if (!parse_url(base_url)) throw ParameterError("base_url is not an http(s) URL: '" + base_url + "'");
}

EndpointConfig& EndpointConfig::with_env_key() {
  if (!api_key) {
    if (const char* k = std::getenv("CURATOR_API_KEY"); k && *k) api_key = k;
  }
  return *this;
}

HttpResponse HttpTransport::post(const std::string& url, const std::string& body,
                                 const std::optional<std::string>& bearer, std::chrono::milliseconds timeout) {
  auto parsed = parse_url(url);
  if (!parsed) return {0, "", std::nullopt, "bad url " + url};
  httplib::Client cli(parsed->origin);
  const auto secs = timeout.count() / 1000;
  const auto usecs = (timeout.count() % 1000) * 1000;
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (bearer) headers.emplace("Authorization", "Bearer " + *bearer);
  auto res = cli.Post(parsed->path.empty() ? "/" : parsed->path, headers, body, "application/json");
  if (!res) return {0, "", std::nullopt, httplib::to_string(res.error())};
  HttpResponse out{res->status, res->body, std::nullopt, ""};
  if (res->has_header("Retry-After")) {
    char* end = nullptr;
    const auto v = res->get_header_value("Retry-After");
    const double secs_after = std::strtod(v.c_str(), &end);
    if (end != v.c_str()) out.retry_after_seconds = secs_after;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string canonical_body(const json& body) { return body.dump(); }

std::string request_hash(std::string_view url, std::string_view model_id, const json& body) {
  std::string material;
  material.append(url).push_back('\n');
  material.append(model_id).push_back('\n');
  material += canonical_body(body);
  return sha256_hex(material);
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::optional<std::string> ResponseCache::get(const std::string& hash) const {
  const auto path = dir_ / (hash + ".json");
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    auto j = json::parse(read_file(path));
    if (j.value("request_hash", "") != hash) return std::nullopt;
    return j.at("response_body").get<std::string>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& hash, const std::string& response_body) const {
  json j;
  j["request_hash"] = hash;
  j["response_body"] = response_body;
  j["created_at"] = std::chrono::duration_cast<std::chrono::seconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
  // last writer wins; write_file renames a private temp file into place
  write_file(dir_ / (hash + ".json"), j.dump());
}

ReplayStore ReplayStore::load(const std::filesystem::path& path) {
  try {
    return parse(read_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

ReplayStore ReplayStore::parse(std::string_view jsonl) {
  ReplayStore store;
  const auto lines = split_lines(jsonl);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    try {
      auto j = json::parse(lines[i]);
      store.add(j.at("request_hash").get<std::string>(), j.at("response_body").get<std::string>());
    } catch (const json::exception& e) {
      throw Error("malformed replay fixture line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return store;
}

void ReplayStore::add(std::string hash, std::string response_body) {
  if (entries_.find(hash) == entries_.end()) order_.push_back(hash);
  entries_[std::move(hash)] = std::move(response_body);
}

std::optional<std::string> ReplayStore::find(const std::string& hash) const {
  auto it = entries_.find(hash);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string ReplayStore::to_jsonl() const {
  std::string out;
  for (const auto& h : order_) {
    json j;
    j["request_hash"] = h;
    j["response_body"] = entries_.at(h);
    out += j.dump() + "\n";
  }
  return out;
}

ReplayRecorder::ReplayRecorder(std::filesystem::path path) : path_(std::move(path)) {}

void ReplayRecorder::record(const std::string& hash, const std::string& response_body) {
  json j;
  j["request_hash"] = hash;
  j["response_body"] = response_body;
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  out << j.dump() << '\n';
}

void ConcurrencyLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_flight_ < limit_; });
  ++in_flight_;
}

void ConcurrencyLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

// ---------------------------------------------------------------------------

InferenceClient::InferenceClient(EndpointConfig cfg, std::shared_ptr<Transport> transport, ClientOptions opts)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      recorder_(std::move(opts.recorder)),
      counters_(std::make_shared<Counters>()),
      rng_mu_(std::make_shared<std::mutex>()),
      rng_state_(std::make_shared<std::uint64_t>(opts.jitter_seed)) {
  cfg_.validate();
  if (!transport_) throw ParameterError("InferenceClient needs a transport");
  if (opts.cache_dir) cache_.emplace(*opts.cache_dir);
  limiter_ = std::make_shared<ConcurrencyLimiter>(cfg_.max_concurrency);
}

InferenceClient::InferenceClient(EndpointConfig cfg, std::shared_ptr<const ReplayStore> replay)
    : cfg_(std::move(cfg)),
      replay_(std::move(replay)),
      counters_(std::make_shared<Counters>()),
      rng_mu_(std::make_shared<std::mutex>()),
      rng_state_(std::make_shared<std::uint64_t>(0)) {
  cfg_.validate();
  limiter_ = std::make_shared<ConcurrencyLimiter>(cfg_.max_concurrency);
}

InferenceClient InferenceClient::with_replay(EndpointConfig cfg, const std::filesystem::path& fixture) {
  return with_replay(std::move(cfg), ReplayStore::load(fixture));
}

InferenceClient InferenceClient::with_replay(EndpointConfig cfg, ReplayStore store) {
  return InferenceClient(std::move(cfg), std::make_shared<const ReplayStore>(std::move(store)));
}

std::chrono::milliseconds InferenceClient::backoff_delay(int retry_index) const {
  const double base = static_cast<double>(cfg_.backoff_base.count());
  const double cap = static_cast<double>(cfg_.backoff_cap.count());
  const double ceiling = std::min(cap, base * std::ldexp(1.0, retry_index));
  double u;
  {
    std::lock_guard lock(*rng_mu_);
    std::mt19937_64 rng(*rng_state_);
    u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    *rng_state_ = rng();
  }
  // jitter within [ceiling/2, ceiling]
  return std::chrono::milliseconds(static_cast<long long>(ceiling * (0.5 + 0.5 * u)));
}

std::string InferenceClient::send_with_retry(const std::string& url, const std::string& body) const {
  const int attempts = cfg_.max_retries + 1;
  std::string last_error;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    HttpResponse res;
    limiter_->acquire();
    try {
      ++counters_->attempts;
      res = transport_->post(url, body, cfg_.api_key, cfg_.timeout);
    } catch (...) {
      limiter_->release();
      throw;
    }
    limiter_->release();

    if (res.status >= 200 && res.status < 300) return res.body;
    last_error = res.status == 0 ? "connection failed: " + res.error
                                 : "HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 200);
    if (!is_transient(res.status)) throw InferenceError(url + ": terminal response " + last_error);
    if (attempt + 1 == attempts) break;

    auto delay = backoff_delay(attempt);
    if (res.retry_after_seconds) {
      const auto hinted = std::chrono::milliseconds(static_cast<long long>(*res.retry_after_seconds * 1000.0));
      delay = std::min(std::max(delay, hinted), cfg_.backoff_cap);
    }
    std::this_thread::sleep_for(delay);
  }
  throw InferenceError(url + ": retries exhausted after " + std::to_string(attempts) + " attempts (" + last_error +
                       ")");
}

json InferenceClient::post_json(std::string_view route, const json& body, bool cacheable) const {
  const auto url = join_url(cfg_.base_url, route);
  const auto hash = request_hash(url, cfg_.model_id, body);

  std::string response;
  if (replay_) {
    auto hit = replay_->find(hash);
    if (!hit) throw InferenceError("unrecorded request " + hash + " (" + url + ")");
    ++counters_->replay_hits;
    response = std::move(*hit);
  } else if (auto cached = (cacheable && cache_) ? cache_->get(hash) : std::nullopt) {
    ++counters_->cache_hits;
    response = std::move(*cached);
  } else {
    response = send_with_retry(url, canonical_body(body));
    if (cacheable && cache_) cache_->put(hash, response);
    if (recorder_) recorder_->record(hash, response);
  }

  try {
    return json::parse(response);
  } catch (const json::exception& e) {
    throw InferenceError(url + ": malformed response body (" + e.what() + ")");
  }
}

// ---------------------------------------------------------------------------

json chat_request_body(const EndpointConfig& cfg, const std::vector<ChatMessage>& messages) {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", cfg.model_id}, {"messages", std::move(msgs)}, {"temperature", cfg.temperature}};
}

json score_request_body(const EndpointConfig& cfg, std::string_view text) {
  return {{"model", cfg.model_id}, {"prompt", std::string(text)}, {"echo", true},
          {"logprobs", 1},         {"max_tokens", 0},               {"temperature", cfg.temperature}};
}

std::string parse_chat_response(const std::string& body) {
  try {
    auto j = json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw InferenceError(std::string("malformed chat response: ") + e.what());
  }
}

namespace {

std::vector<TokenScore> scores_from_json(const json& j) {
  std::vector<TokenScore> out;
  try {
    const auto& lp = j.at("choices").at(0).at("logprobs");
    if (lp.is_null()) throw InferenceError("endpoint lacks logprob support (logprobs is null)");
    const auto& tokens = lp.at("tokens");
    const auto& logprobs = lp.at("token_logprobs");
    if (tokens.size() != logprobs.size()) throw InferenceError("malformed score response: tokens/logprobs length mismatch");
    bool any = false;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      TokenScore s{tokens[i].get<std::string>(), std::nullopt};
      if (!logprobs[i].is_null()) {
        double v = logprobs[i].get<double>();
        if (!std::isfinite(v) || v > 1e-6) throw InferenceError("malformed score response: logprob " + exact(v));
        s.logprob = std::min(v, 0.0);
        any = true;
      }
      out.push_back(std::move(s));
    }
    if (!any) throw InferenceError("endpoint lacks logprob support (no token carries a logprob)");
  } catch (const json::exception& e) {
    throw InferenceError(std::string("malformed score response: ") + e.what());
  }
  return out;
}

}  // namespace

std::vector<TokenScore> parse_score_response(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw InferenceError(std::string("malformed score response: ") + e.what());
  }
  return scores_from_json(j);
}

std::string InferenceClient::chat_complete(const std::vector<ChatMessage>& messages) const {
  if (messages.empty()) throw ParameterError("chat_complete: messages must be non-empty");
  if (messages.front().role != "system" && messages.front().role != "user")
    throw ParameterError("chat_complete: first message role must be 'system' or 'user'");
  auto j = post_json("/chat/completions", chat_request_body(cfg_, messages));
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw InferenceError(std::string("malformed chat response: ") + e.what());
  }
}

std::vector<TokenScore> InferenceClient::score_text(std::string_view text) const {
  if (text.empty()) throw ParameterError("score_text: text must be non-empty");
  return scores_from_json(post_json("/completions", score_request_body(cfg_, text)));
}

}  // namespace curator
