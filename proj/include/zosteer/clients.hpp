#pragma once

/**
 * Clients for the two black boxes behind the objective: a moderation service
 * and an embedding-conditioned generation service, plus their composition
 * Phi(X) = h(f(X)).
 *
 * Both clients talk through a Transport so that tests and CI can swap the
 * network for in-process handlers or recorded fixtures:
 *
 *   HttpTransport       live HTTP(S) via cpp-httplib
 *   HandlerTransport    in-process function (mock services)
 *   RecordingTransport  wraps another transport, appends successful exchanges
 *                       to an NDJSON fixture file
 *   ReplayTransport     answers from such a fixture file, never touches the network
 *
 * Request and response texts are never logged.
 */

#include "zosteer/error.hpp"
#include "zosteer/objective.hpp"
#include "zosteer/optimizer.hpp"
#include "zosteer/wire.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

namespace zosteer {

struct HttpResponse {
  int status = 0;               // 0 = no HTTP exchange happened
  std::string body;
  std::string transport_error;  // set when status == 0
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

/// Thread-safe POST of a JSON body.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& body,
                            const HttpHeaders& headers) = 0;
};

class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(std::string base_url, std::chrono::seconds timeout = std::chrono::seconds(60))
      : base_url_(std::move(base_url)), timeout_(timeout) {}

  HttpResponse post(const std::string& path, const std::string& body,
                    const HttpHeaders& headers) override {
    // httplib::Client is not safe for concurrent use; one per request.
    httplib::Client cli(base_url_);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    cli.set_write_timeout(timeout_);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = cli.Post(path, h, body, "application/json");
    if (!res) return {0, {}, httplib::to_string(res.error())};
    return {res->status, res->body, {}};
  }

 private:
  std::string base_url_;
  std::chrono::seconds timeout_;
};

class HandlerTransport final : public Transport {
 public:
  using Handler = std::function<HttpResponse(const std::string& path, const std::string& body)>;
  explicit HandlerTransport(Handler h) : handler_(std::move(h)) {}

  HttpResponse post(const std::string& path, const std::string& body, const HttpHeaders&) override {
    return handler_(path, body);
  }

 private:
  Handler handler_;
};

/// Hex FNV-1a of path and body. Headers (credentials) never enter the hash.
inline std::string request_hash(const std::string& path, const std::string& body) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(path + "\n" + body)));
  return buf;
}

/// Append-only NDJSON fixture file shared by any number of recording transports.
class FixtureWriter {
 public:
  explicit FixtureWriter(const std::string& path) : out_(path, std::ios::app) {
    if (!out_) throw ConfigError("cannot open fixture file " + path + " for writing");
  }

  void append(const std::string& hash, const std::string& response_body) {
    json line{{"request_hash", hash}, {"response", json::parse(response_body)}};
    std::lock_guard lock(mu_);
    out_ << line.dump() << '\n';
    out_.flush();
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
};

class RecordingTransport final : public Transport {
 public:
  RecordingTransport(std::shared_ptr<Transport> inner, std::shared_ptr<FixtureWriter> sink)
      : inner_(std::move(inner)), sink_(std::move(sink)) {}

  RecordingTransport(std::shared_ptr<Transport> inner, const std::string& fixture_path)
      : RecordingTransport(std::move(inner), std::make_shared<FixtureWriter>(fixture_path)) {}

  HttpResponse post(const std::string& path, const std::string& body,
                    const HttpHeaders& headers) override {
    HttpResponse res = inner_->post(path, body, headers);
    if (res.status >= 200 && res.status < 300) sink_->append(request_hash(path, body), res.body);
    return res;
  }

 private:
  std::shared_ptr<Transport> inner_;
  std::shared_ptr<FixtureWriter> sink_;
};

class ReplayTransport final : public Transport {
 public:
  explicit ReplayTransport(const std::string& fixture_path) {
    std::ifstream in(fixture_path);
    if (!in) throw ConfigError("cannot open fixture file " + fixture_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        const json j = json::parse(line);
        responses_[j.at("request_hash").get<std::string>()] = j.at("response").dump();
      } catch (const json::exception& e) {
        throw ConfigError("fixture line " + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  HttpResponse post(const std::string& path, const std::string& body, const HttpHeaders&) override {
    const auto key = request_hash(path, body);
    auto it = responses_.find(key);
    if (it == responses_.end()) throw ProtocolError("no recorded response for request " + key);
    return {200, it->second, {}};
  }

  std::size_t size() const noexcept { return responses_.size(); }

 private:
  std::unordered_map<std::string, std::string> responses_;
};

// ---------------------------------------------------------------------------
// Retry and rate limiting
// ---------------------------------------------------------------------------

enum class RetryCondition { transport_error, rate_limited, server_error };

struct RetryPolicy {
  std::size_t max_attempts = 3;
  std::size_t backoff_base_ms = 200;  // delay before retry a is base * 2^(a-1)
  std::set<RetryCondition> retry_on = {RetryCondition::transport_error, RetryCondition::rate_limited,
                                       RetryCondition::server_error};

  void validate() const {
    if (max_attempts < 1) throw ConfigError("retry max_attempts must be >= 1");
  }

  bool should_retry(const HttpResponse& r) const {
    if (r.status == 0) return retry_on.contains(RetryCondition::transport_error);
    if (r.status == 429) return retry_on.contains(RetryCondition::rate_limited);
    if (r.status >= 500) return retry_on.contains(RetryCondition::server_error);
    return false;
  }

  std::chrono::milliseconds backoff(std::size_t attempt) const {
    return std::chrono::milliseconds(backoff_base_ms << std::min<std::size_t>(attempt - 1, 20));
  }
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline Sleeper default_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

/// Token bucket. A non-positive rate disables limiting.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second = 20.0, double burst = 20.0)
      : rate_(requests_per_second), capacity_(std::max(1.0, burst)), tokens_(capacity_),
        last_(std::chrono::steady_clock::now()) {}

  void acquire() {
    if (rate_ <= 0.0) return;
    for (;;) {
      std::chrono::duration<double> wait{};
      {
        std::lock_guard lock(mu_);
        const auto now = std::chrono::steady_clock::now();
        tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
        last_ = now;
        if (tokens_ >= 1.0) {
          tokens_ -= 1.0;
          return;
        }
        wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
      }
      std::this_thread::sleep_for(wait);
    }
  }

  double rate() const noexcept { return rate_; }

 private:
  double rate_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mu_;
};

namespace detail {

/// Sends until success, a non-retryable status, or the attempt budget runs out.
inline HttpResponse send_with_retry(Transport& transport, const std::string& path, const std::string& body,
                                    const HttpHeaders& headers, const RetryPolicy& policy,
                                    const Sleeper& sleep, RateLimiter* limiter) {
  HttpResponse res;
  for (std::size_t attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    if (limiter) limiter->acquire();
    res = transport.post(path, body, headers);
    if (!policy.should_retry(res)) return res;
    if (attempt < policy.max_attempts) sleep(policy.backoff(attempt));
  }
  return res;
}

inline std::string describe(const HttpResponse& r) {
  if (r.status == 0) return "transport error: " + r.transport_error;
  return "HTTP " + std::to_string(r.status);
}

inline bool blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos;
}

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Moderation
// ---------------------------------------------------------------------------

struct ModerationRequest {
  std::string input_text;
};

struct ModerationResult {
  ScoreVector scores;
  double latency_ms = 0.0;
};

struct ModerationOptions {
  std::string path = "/v1/moderations";
  std::string api_key_env;  // name of the variable holding the bearer token; empty = no auth
  std::string model;        // optional "model" field
  CategoryMapping mapping;
  RetryPolicy retry;
  double rate_limit_rps = 20.0;
  double rate_limit_burst = 20.0;
};

class ModerationClient {
 public:
  ModerationClient(std::shared_ptr<Transport> transport, ModerationOptions opts,
                   Sleeper sleep = default_sleeper())
      : transport_(std::move(transport)), opts_(std::move(opts)), sleep_(std::move(sleep)),
        limiter_(opts_.rate_limit_rps, opts_.rate_limit_burst) {
    opts_.retry.validate();
    opts_.mapping.validate();
  }

  ModerationResult moderate(const ModerationRequest& req) {
    if (detail::blank(req.input_text)) throw ArgumentError("moderation input is empty");
    json body = moderation_request_json(req.input_text);
    auto [results, latency] = send(body);
    return {results.front(), latency};
  }

  /// One multi-input request; results in input order. Latency is for the whole call.
  std::vector<ModerationResult> moderate_many(const std::vector<std::string>& texts) {
    if (texts.empty()) throw ArgumentError("no inputs to moderate");
    for (const auto& t : texts) {
      if (detail::blank(t)) throw ArgumentError("moderation input is empty");
    }
    auto [results, latency] = send(moderation_request_json(texts));
    if (results.size() != texts.size()) {
      throw ProtocolError("moderation returned " + std::to_string(results.size()) + " results for " +
                          std::to_string(texts.size()) + " inputs");
    }
    std::vector<ModerationResult> out;
    for (auto& s : results) out.push_back({s, latency});
    return out;
  }

 private:
  std::pair<std::vector<ScoreVector>, double> send(json body) {
    if (!opts_.model.empty()) body["model"] = opts_.model;
    HttpHeaders headers;
    if (!opts_.api_key_env.empty()) {
      const char* key = std::getenv(opts_.api_key_env.c_str());
      if (!key || !*key) throw ConfigError("environment variable " + opts_.api_key_env + " is not set");
      headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }
    const auto t0 = std::chrono::steady_clock::now();
    HttpResponse res = detail::send_with_retry(*transport_, opts_.path, body.dump(), headers,
                                               opts_.retry, sleep_, &limiter_);
    const double latency = detail::ms_since(t0);
    if (res.status == 401 || res.status == 403) {
      throw ConfigError("moderation endpoint rejected credentials (" + detail::describe(res) + ")");
    }
    if (res.status == 0 || res.status == 429 || res.status >= 500) {
      throw OracleUnavailableError("moderation unavailable after " + std::to_string(opts_.retry.max_attempts) +
                                   " attempts: " + detail::describe(res));
    }
    if (res.status < 200 || res.status >= 300) {
      throw ProtocolError("moderation request refused: " + detail::describe(res));
    }
    json parsed;
    try {
      parsed = json::parse(res.body);
    } catch (const json::exception&) {
      throw ProtocolError("moderation response is not JSON");
    }
    return {parse_moderation_response(parsed, opts_.mapping), latency};
  }

  std::shared_ptr<Transport> transport_;
  ModerationOptions opts_;
  Sleeper sleep_;
  RateLimiter limiter_;
};

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct GenerationResult {
  std::string text;
  std::size_t tokens_generated = 0;
  double latency_ms = 0.0;
};

struct GenerationOptions {
  std::string path = "/generate";
  RetryPolicy retry;
};

class GenerationClient {
 public:
  GenerationClient(std::shared_ptr<Transport> transport, GenerationOptions opts = {},
                   Sleeper sleep = default_sleeper())
      : transport_(std::move(transport)), opts_(std::move(opts)), sleep_(std::move(sleep)) {
    opts_.retry.validate();
  }

  GenerationResult generate(const GenerationRequest& req) {
    req.validate();
    const auto t0 = std::chrono::steady_clock::now();
    HttpResponse res = detail::send_with_retry(*transport_, opts_.path, generation_request_json(req).dump(),
                                               {}, opts_.retry, sleep_, nullptr);
    const double latency = detail::ms_since(t0);
    if (res.status == 0 || res.status == 429 || res.status >= 500) {
      throw GeneratorUnavailableError("generator unavailable: " + detail::describe(res));
    }
    if (res.status == 400 || res.status == 422) {
      std::string why = detail::describe(res);
      try {
        why = json::parse(res.body).value("error", why);
      } catch (const json::exception&) {
      }
      throw ConfigError("generator rejected the request: " + why);
    }
    if (res.status < 200 || res.status >= 300) {
      throw ProtocolError("generation request refused: " + detail::describe(res));
    }
    json parsed;
    try {
      parsed = json::parse(res.body);
    } catch (const json::exception&) {
      throw ProtocolError("generation response is not JSON");
    }
    auto g = parse_generation_response(parsed);
    return {std::move(g.text), g.tokens_generated, latency};
  }

 private:
  std::shared_ptr<Transport> transport_;
  GenerationOptions opts_;
  Sleeper sleep_;
};

// ---------------------------------------------------------------------------
// Phi(X) = h(f(X))
// ---------------------------------------------------------------------------

struct GenerationParams {
  std::size_t max_new_tokens = 128;
  double temperature = 0.1;
};

/// Generate, then moderate, then hand the scores to the optimizer. An empty
/// completion has nothing to score and maps to all-zero scores without an
/// oracle call.
class PipelineObjective {
 public:
  PipelineObjective(std::shared_ptr<GenerationClient> generator, std::shared_ptr<ModerationClient> oracle,
                    GenerationParams params = {}, bool keep_response = false)
      : generator_(std::move(generator)), oracle_(std::move(oracle)), params_(params),
        keep_response_(keep_response) {}

  Evaluation evaluate(const EmbeddingMatrix& x, std::uint64_t seed) const {
    GenerationResult gen;
    try {
      gen = generator_->generate({x, params_.max_new_tokens, params_.temperature, seed});
    } catch (const std::exception& e) {
      throw StageError(Stage::generate, e.what());
    }
    Evaluation out;
    out.generator_ms = gen.latency_ms;
    if (!detail::blank(gen.text)) {
      try {
        const auto mod = oracle_->moderate({gen.text});
        out.scores = mod.scores;
        out.oracle_ms = mod.latency_ms;
      } catch (const std::exception& e) {
        throw StageError(Stage::moderate, e.what());
      }
    }
    if (keep_response_) out.response = std::move(gen.text);
    return out;
  }

  PipelineObjective with_response_kept(bool keep) const {
    PipelineObjective copy = *this;
    copy.keep_response_ = keep;
    return copy;
  }

 private:
  std::shared_ptr<GenerationClient> generator_;
  std::shared_ptr<ModerationClient> oracle_;
  GenerationParams params_;
  bool keep_response_;
};

static_assert(BlackBoxObjective<PipelineObjective>);

}  // namespace zosteer
