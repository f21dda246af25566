#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>

#include "archetype/core.hpp"
#include "archetype/errors.hpp"
#include "archetype/strings.hpp"

namespace archetype {

// ---------------------------------------------------------------------------
// Generation parameters
// ---------------------------------------------------------------------------

/// Decoding parameters sent with every query.  Defaults are greedy
/// (temperature 0) for reproducibility.
struct GenParams {
  double temperature = 0.0;
  double top_p = 1.0;
  double repetition_penalty = 1.0;
  int max_tokens = 32;
};

/// Constants of the resample-time parameter schedule: temperature grows
/// multiplicatively, top_p and repetition_penalty move additively, all
/// clamped to their legal ranges.
struct PermuteSchedule {
  double temperature_floor = 0.2;
  double temperature_factor = 1.5;
  double temperature_max = 2.0;
  double top_p_step = 0.05;
  double top_p_min = 0.1;
  double repetition_step = 0.05;
};

/// The k-th retry's decoding parameters (k_index >= 1; the base itself is
/// attempt 0).  Monotone in k_index up to the clamps: temperature rises,
/// top_p falls, repetition_penalty rises.
inline GenParams permute_params(const GenParams& base, int k_index,
                                const PermuteSchedule& schedule = {}) {
  GenParams out = base;
  double temperature = std::max(base.temperature, schedule.temperature_floor) *
                       std::pow(schedule.temperature_factor, k_index);
  out.temperature = std::min(temperature, schedule.temperature_max);
  out.top_p = std::clamp(base.top_p - schedule.top_p_step * k_index,
                         schedule.top_p_min, 1.0);
  out.repetition_penalty =
      std::max(1.0, base.repetition_penalty + schedule.repetition_step * k_index);
  return out;
}

// ---------------------------------------------------------------------------
// Backend contract
// ---------------------------------------------------------------------------

enum class BackendKind { remote_openai_compatible, scripted_mock, echo };

inline const char* backend_kind_name(BackendKind kind) {
  switch (kind) {
    case BackendKind::remote_openai_compatible: return "remote_openai_compatible";
    case BackendKind::scripted_mock: return "scripted_mock";
    case BackendKind::echo: return "echo";
  }
  return "unknown";
}

struct BackendConfig {
  BackendKind kind = BackendKind::echo;
  std::string endpoint;           // remote only, e.g. http://host:8000
  std::string model_name = "generic";
  int max_concurrency = 4;
  std::chrono::milliseconds timeout{30000};
  int retries = 2;                // transport retries after the first attempt
  bool send_repetition_penalty = false;
  std::string api_key_env = "ARCHETYPE_API_KEY";
  std::string script_path;        // scripted_mock only
};

inline void validate_backend_config(const BackendConfig& cfg) {
  if (cfg.max_concurrency < 1) {
    throw Error(ErrorCode::config, "backend max_concurrency must be >= 1");
  }
  if (cfg.retries < 0) {
    throw Error(ErrorCode::config, "backend retries must be >= 0");
  }
  if (cfg.kind == BackendKind::remote_openai_compatible && cfg.endpoint.empty()) {
    throw Error(ErrorCode::config, "remote backend requires an endpoint URL");
  }
}

/// One model call: which column and retry attempt it serves, the prompt,
/// and the decoding parameters.
struct QueryRequest {
  std::string column_id;
  int attempt = 0;
  std::string prompt;
  GenParams params;
};

struct QueryLogEntry {
  std::string column_id;
  std::string prompt;
  GenParams params;
  std::string response;
  double latency_ms = 0.0;
  int attempt = 0;
};

/// Append-only call log; one entry per backend call.  Appends are
/// serialized, so entries for a given column appear in call order.
class QueryLog {
 public:
  void append(QueryLogEntry entry) {
    std::lock_guard<std::mutex> lock(mutex_);
    entries_.push_back(std::move(entry));
  }

  std::vector<QueryLogEntry> snapshot() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::vector<QueryLogEntry> entries_;
};

/// A generative model behind a uniform contract.  Implementations must be
/// safe for concurrent calls up to config().max_concurrency.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const QueryRequest& request) = 0;
  virtual const BackendConfig& config() const = 0;
};

// ---------------------------------------------------------------------------
// Offline backends
// ---------------------------------------------------------------------------

/// Deterministic offline backend: answers with the text after the last ':'
/// of the prompt (the whole prompt when it has no colon).  Useful for
/// plumbing tests and dry runs.
class EchoBackend : public Backend {
 public:
  explicit EchoBackend(BackendConfig cfg = make_config()) : cfg_(std::move(cfg)) {
    validate_backend_config(cfg_);
  }

  std::string complete(const QueryRequest& request) override {
    std::size_t pos = request.prompt.rfind(':');
    if (pos == std::string::npos) return request.prompt;
    return request.prompt.substr(pos + 1);
  }

  const BackendConfig& config() const override { return cfg_; }

  static BackendConfig make_config() {
    BackendConfig cfg;
    cfg.kind = BackendKind::echo;
    return cfg;
  }

 private:
  BackendConfig cfg_;
};

using MockScript = std::map<std::string, std::vector<std::string>>;

/// Mock script file: JSON object mapping column_id to a response or an
/// array of responses indexed by attempt; "*" supplies the default.
inline MockScript mock_script_from_json(const json& doc) {
  if (!doc.is_object()) {
    throw Error(ErrorCode::parse, "mock script must be a JSON object");
  }
  MockScript script;
  for (const auto& [key, value] : doc.items()) {
    std::vector<std::string> responses;
    if (value.is_string()) {
      responses.push_back(value.get<std::string>());
    } else if (value.is_array()) {
      for (const json& item : value) {
        if (!item.is_string()) {
          throw Error(ErrorCode::parse,
                      "mock script entry '" + key + "' must contain strings");
        }
        responses.push_back(item.get<std::string>());
      }
      if (responses.empty()) {
        throw Error(ErrorCode::parse,
                    "mock script entry '" + key + "' must be nonempty");
      }
    } else {
      throw Error(ErrorCode::parse, "mock script entry '" + key +
                                        "' must be a string or array of strings");
    }
    script[key] = std::move(responses);
  }
  return script;
}

inline MockScript load_mock_script(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& err) {
    throw Error(ErrorCode::parse,
                "mock script " + path + " is not valid JSON: " + err.what());
  }
  return mock_script_from_json(doc);
}

/// Replays canned responses keyed on (column_id, attempt): response index =
/// min(attempt, last index), with the "*" entry as fallback for unknown
/// columns.  Fully offline and deterministic; call counters let tests
/// assert exactly how many model calls a strategy made.
class ScriptedMockBackend : public Backend {
 public:
  ScriptedMockBackend(BackendConfig cfg, MockScript script)
      : cfg_(std::move(cfg)), script_(std::move(script)) {
    cfg_.kind = BackendKind::scripted_mock;
    validate_backend_config(cfg_);
  }

  std::string complete(const QueryRequest& request) override {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++total_calls_;
      ++calls_by_column_[request.column_id];
    }
    const std::vector<std::string>* responses = nullptr;
    auto it = script_.find(request.column_id);
    if (it != script_.end()) {
      responses = &it->second;
    } else {
      auto fallback = script_.find("*");
      if (fallback != script_.end()) responses = &fallback->second;
    }
    if (responses == nullptr || responses->empty()) return "";
    std::size_t index = std::min<std::size_t>(
        static_cast<std::size_t>(std::max(request.attempt, 0)),
        responses->size() - 1);
    return (*responses)[index];
  }

  const BackendConfig& config() const override { return cfg_; }

  std::size_t total_calls() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return total_calls_;
  }

  std::size_t calls_for(const std::string& column_id) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = calls_by_column_.find(column_id);
    return it == calls_by_column_.end() ? 0 : it->second;
  }

 private:
  BackendConfig cfg_;
  MockScript script_;
  mutable std::mutex mutex_;
  std::size_t total_calls_ = 0;
  std::map<std::string, std::size_t> calls_by_column_;
};

// ---------------------------------------------------------------------------
// Remote backend (OpenAI-compatible chat completions)
// ---------------------------------------------------------------------------

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Thrown by transports on connection-level failures (no HTTP status).
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& message, bool timed_out)
      : std::runtime_error(message), timed_out_(timed_out) {}
  bool timed_out() const noexcept { return timed_out_; }

 private:
  bool timed_out_;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& body,
                            const HttpHeaders& headers) = 0;
};

/// Real HTTP transport.  Keeps a global POST counter so offline test suites
/// can assert that no network traffic happened.
class HttplibTransport : public HttpTransport {
 public:
  HttplibTransport(const std::string& endpoint, std::chrono::milliseconds timeout)
      : timeout_(timeout) {
    std::size_t scheme = endpoint.find("://");
    std::size_t path_start = scheme == std::string::npos
                                 ? endpoint.find('/')
                                 : endpoint.find('/', scheme + 3);
    if (path_start == std::string::npos) {
      base_ = endpoint;
    } else {
      base_ = endpoint.substr(0, path_start);
      std::string prefix = endpoint.substr(path_start);
      if (prefix != "/") path_prefix_ = prefix;
    }
    if (base_.empty()) {
      throw Error(ErrorCode::config, "remote endpoint URL is empty");
    }
  }

  HttpResponse post(const std::string& path, const std::string& body,
                    const HttpHeaders& headers) override {
    post_count().fetch_add(1, std::memory_order_relaxed);
    httplib::Client client(base_);
    auto seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    auto microseconds =
        std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - seconds);
    client.set_connection_timeout(seconds.count(), microseconds.count());
    client.set_read_timeout(seconds.count(), microseconds.count());
    client.set_write_timeout(seconds.count(), microseconds.count());
    httplib::Headers httplib_headers(headers.begin(), headers.end());
    httplib::Result result = client.Post(path_prefix_ + path, httplib_headers,
                                         body, "application/json");
    if (!result) {
      bool timed_out = result.error() == httplib::Error::ConnectionTimeout;
      throw TransportError(httplib::to_string(result.error()), timed_out);
    }
    return HttpResponse{result->status, result->body};
  }

  /// Total POSTs issued by every instance in this process.
  static std::atomic<std::uint64_t>& post_count() {
    static std::atomic<std::uint64_t> count{0};
    return count;
  }

 private:
  std::string base_;
  std::string path_prefix_;
  std::chrono::milliseconds timeout_;
};

/// Client for OpenAI-compatible chat-completions gateways.  Transport
/// failures are retried up to config().retries extra attempts; HTTP error
/// statuses are not retried.  In-flight calls are capped at
/// max_concurrency via a semaphore.
class RemoteBackend : public Backend {
 public:
  RemoteBackend(BackendConfig cfg, std::shared_ptr<HttpTransport> transport)
      : cfg_(std::move(cfg)),
        transport_(std::move(transport)),
        slots_(cfg_.max_concurrency) {
    cfg_.kind = BackendKind::remote_openai_compatible;
    validate_backend_config(cfg_);
  }

  std::string complete(const QueryRequest& request) override {
    slots_.acquire();
    struct Releaser {
      std::counting_semaphore<>& slots;
      ~Releaser() { slots.release(); }
    } releaser{slots_};

    json body{{"model", cfg_.model_name},
              {"messages", json::array({json{{"role", "user"},
                                             {"content", request.prompt}}})},
              {"temperature", request.params.temperature},
              {"top_p", request.params.top_p},
              {"max_tokens", request.params.max_tokens}};
    if (cfg_.send_repetition_penalty) {
      body["repetition_penalty"] = request.params.repetition_penalty;
    }
    HttpHeaders headers;
    if (!cfg_.api_key_env.empty()) {
      if (const char* key = std::getenv(cfg_.api_key_env.c_str())) {
        headers.emplace_back("Authorization", std::string("Bearer ") + key);
      }
    }

    std::string last_message = "no attempt made";
    bool last_timed_out = false;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      HttpResponse response;
      try {
        response = transport_->post("/v1/chat/completions", body.dump(), headers);
      } catch (const TransportError& err) {
        last_message = err.what();
        last_timed_out = err.timed_out();
        continue;
      }
      if (response.status < 200 || response.status >= 300) {
        throw Error(ErrorCode::backend_rejected,
                    "backend rejected the request with status " +
                        std::to_string(response.status));
      }
      return extract_content(response.body);
    }
    throw Error(last_timed_out ? ErrorCode::backend_timeout
                               : ErrorCode::backend_unreachable,
                "backend unreachable after " + std::to_string(cfg_.retries + 1) +
                    " attempts: " + last_message);
  }

  const BackendConfig& config() const override { return cfg_; }

 private:
  static std::string extract_content(const std::string& body) {
    json doc = json::parse(body, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded() || !doc.contains("choices") || !doc["choices"].is_array() ||
        doc["choices"].empty()) {
      throw Error(ErrorCode::backend_rejected,
                  "backend returned an unparseable completion body");
    }
    const json& first = doc["choices"][0];
    if (!first.contains("message") || !first["message"].contains("content") ||
        !first["message"]["content"].is_string()) {
      throw Error(ErrorCode::backend_rejected,
                  "backend completion lacks choices[0].message.content");
    }
    return first["message"]["content"].get<std::string>();
  }

  BackendConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
  std::counting_semaphore<> slots_;
};

inline std::unique_ptr<Backend> make_backend(const BackendConfig& cfg,
                                             std::shared_ptr<HttpTransport> transport =
                                                 nullptr) {
  validate_backend_config(cfg);
  switch (cfg.kind) {
    case BackendKind::echo:
      return std::make_unique<EchoBackend>(cfg);
    case BackendKind::scripted_mock:
      return std::make_unique<ScriptedMockBackend>(cfg,
                                                   load_mock_script(cfg.script_path));
    case BackendKind::remote_openai_compatible:
      if (transport == nullptr) {
        transport = std::make_shared<HttplibTransport>(cfg.endpoint, cfg.timeout);
      }
      return std::make_unique<RemoteBackend>(cfg, std::move(transport));
  }
  throw Error(ErrorCode::config, "unknown backend kind");
}

// ---------------------------------------------------------------------------
// Query entry point
// ---------------------------------------------------------------------------

/// Issues one model call, trims the completion, and logs it.  All model
/// traffic in the pipeline funnels through here.
inline std::string generate(Backend& backend, const QueryRequest& request,
                            QueryLog* log = nullptr) {
  auto started = std::chrono::steady_clock::now();
  std::string raw = backend.complete(request);
  std::string trimmed = trim(raw);
  if (log != nullptr) {
    auto elapsed = std::chrono::duration<double, std::milli>(
        std::chrono::steady_clock::now() - started);
    log->append(QueryLogEntry{request.column_id, request.prompt, request.params,
                              trimmed, elapsed.count(), request.attempt});
  }
  return trimmed;
}

}  // namespace archetype
