#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>

namespace cdistill {

struct OracleRequest {
  std::string prompt;
  std::size_t max_tokens = 256;
  double temperature = 0.7;
  std::string oracle_id = "default";
};

// SHA-256 over a canonical encoding of (prompt, max_tokens, temperature, oracle_id), hex.
std::string request_digest(const OracleRequest& request);

class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, OracleRequest request);
  const OracleRequest& request() const noexcept { return request_; }

 private:
  OracleRequest request_;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Anything that turns a prompt into a completion.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual std::string complete(const OracleRequest& request) = 0;
};

// Returns the prompt verbatim.
class EchoOracle final : public Oracle {
 public:
  std::string complete(const OracleRequest& request) override;
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::atomic<std::size_t> calls_{0};
};

class FunctionOracle final : public Oracle {
 public:
  explicit FunctionOracle(std::function<std::string(const OracleRequest&)> fn) : fn_(std::move(fn)) {}
  std::string complete(const OracleRequest& request) override;
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::function<std::string(const OracleRequest&)> fn_;
  std::atomic<std::size_t> calls_{0};
};

// A single wire attempt. Implementations throw TransportError for retryable
// failures and ProtocolError for malformed responses.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string send(const OracleRequest& request) = 0;
};

// Request body {prompt, max_tokens, temperature} (plus model when set).
std::string render_request_body(const OracleRequest& request, const std::string& model = "");

// Accepts {text}, {choices:[{text}]} and {choices:[{message:{content}}]}.
std::string parse_completion_body(std::string_view body);

struct HttpEndpoint {
  std::string url;                                // e.g. http://localhost:8080/v1/completions
  std::string api_key_env = "CD_ORACLE_API_KEY";  // read at send time, never logged
  std::string model;
  std::chrono::seconds timeout{60};
};

std::unique_ptr<Transport> make_http_transport(HttpEndpoint endpoint);

struct OracleCacheEntry {
  std::string hash;
  std::string completion;
  std::string timestamp;
  std::string oracle_id;
};

struct ClientOptions {
  std::size_t retries = 3;
  std::chrono::milliseconds initial_backoff{250};
  double backoff_factor = 2.0;
  std::size_t max_in_flight = 4;
  std::optional<std::filesystem::path> cache_path;
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
  std::function<std::string()> clock;                    // defaults to UTC ISO-8601 now
};

// Caching, retrying, rate-limited front end over a Transport. Safe for
// concurrent use: identical concurrent requests share one wire call.
class OracleClient final : public Oracle {
 public:
  OracleClient(std::shared_ptr<Transport> transport, ClientOptions options = {});

  std::string complete(const OracleRequest& request) override;

  std::optional<OracleCacheEntry> cached(const OracleRequest& request) const;
  std::size_t wire_attempts() const noexcept { return wire_attempts_.load(); }
  std::size_t cache_hits() const noexcept { return cache_hits_.load(); }
  std::size_t cache_size() const;
  std::size_t peak_in_flight() const noexcept { return peak_in_flight_.load(); }

 private:
  std::string call_with_retries(const OracleRequest& request);
  void remember(const std::string& digest, const OracleRequest& request, const std::string& completion);

  std::shared_ptr<Transport> transport_;
  ClientOptions options_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, OracleCacheEntry> cache_;
  std::map<std::string, std::shared_future<std::string>> pending_;
  std::counting_semaphore<> slots_;
  std::atomic<std::size_t> wire_attempts_{0};
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_in_flight_{0};
};

std::string utc_timestamp();

}  // namespace cdistill
