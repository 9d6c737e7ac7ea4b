#include "cdistill/oracle.hpp"

#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "cdistill/digest.hpp"
#include "json.hpp"

namespace cdistill {

std::string request_digest(const OracleRequest& request) {
  const nlohmann::json canonical = {request.prompt, request.max_tokens, request.temperature, request.oracle_id};
  return sha256_hex(canonical.dump());
}

TransportError::TransportError(const std::string& what, OracleRequest request)
    : std::runtime_error(what), request_(std::move(request)) {}

std::string EchoOracle::complete(const OracleRequest& request) {
  ++calls_;
  return request.prompt;
}

std::string FunctionOracle::complete(const OracleRequest& request) {
  ++calls_;
  return fn_(request);
}

std::string render_request_body(const OracleRequest& request, const std::string& model) {
  nlohmann::json body = {
      {"prompt", request.prompt}, {"max_tokens", request.max_tokens}, {"temperature", request.temperature}};
  if (!model.empty()) body["model"] = model;
  return body.dump();
}

std::string parse_completion_body(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("completion response is not JSON: ") + e.what());
  }
  if (j.is_object()) {
    if (auto it = j.find("text"); it != j.end() && it->is_string()) return it->get<std::string>();
    if (auto it = j.find("choices"); it != j.end() && it->is_array() && !it->empty()) {
      const auto& first = it->front();
      if (auto t = first.find("text"); t != first.end() && t->is_string()) return t->get<std::string>();
      if (auto m = first.find("message"); m != first.end() && m->is_object()) {
        if (auto c = m->find("content"); c != m->end() && c->is_string()) return c->get<std::string>();
      }
    }
  }
  throw ProtocolError("completion response has no text field");
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

OracleClient::OracleClient(std::shared_ptr<Transport> transport, ClientOptions options)
    : transport_(std::move(transport)),
      options_(std::move(options)),
      slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options_.max_in_flight))) {
  if (!transport_) throw std::invalid_argument("OracleClient requires a transport");
  if (!options_.sleep) options_.sleep = [](std::chrono::milliseconds ms) { std::this_thread::sleep_for(ms); };
  if (!options_.clock) options_.clock = utc_timestamp;

  if (options_.cache_path && std::filesystem::exists(*options_.cache_path)) {
    std::ifstream in(*options_.cache_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        OracleCacheEntry entry{j.at("hash").get<std::string>(), j.at("completion").get<std::string>(),
                               j.value("timestamp", ""), j.value("oracle_id", "")};
        cache_.insert_or_assign(entry.hash, std::move(entry));
      } catch (const std::exception& e) {
        throw std::runtime_error(options_.cache_path->string() + ":" + std::to_string(line_no) +
                                 ": bad cache record: " + e.what());
      }
    }
  }
}

std::optional<OracleCacheEntry> OracleClient::cached(const OracleRequest& request) const {
  std::lock_guard lock(mutex_);
  if (auto it = cache_.find(request_digest(request)); it != cache_.end()) return it->second;
  return std::nullopt;
}

std::size_t OracleClient::cache_size() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

std::string OracleClient::complete(const OracleRequest& request) {
  const auto digest = request_digest(request);
  std::promise<std::string> promise;
  {
    std::unique_lock lock(mutex_);
    if (auto it = cache_.find(digest); it != cache_.end()) {
      ++cache_hits_;
      return it->second.completion;
    }
    if (auto it = pending_.find(digest); it != pending_.end()) {
      auto shared = it->second;
      lock.unlock();
      ++cache_hits_;
      return shared.get();
    }
    pending_.emplace(digest, promise.get_future().share());
  }

  try {
    auto completion = call_with_retries(request);
    remember(digest, request, completion);
    promise.set_value(completion);
    return completion;
  } catch (...) {
    {
      std::lock_guard lock(mutex_);
      pending_.erase(digest);
    }
    promise.set_exception(std::current_exception());
    throw;
  }
}

std::string OracleClient::call_with_retries(const OracleRequest& request) {
  slots_.acquire();
  const auto now_in_flight = ++in_flight_;
  auto peak = peak_in_flight_.load();
  while (now_in_flight > peak && !peak_in_flight_.compare_exchange_weak(peak, now_in_flight)) {
  }
  struct Release {
    OracleClient* self;
    ~Release() {
      --self->in_flight_;
      self->slots_.release();
    }
  } release{this};

  auto backoff = options_.initial_backoff;
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= options_.retries; ++attempt) {
    if (attempt > 0) {
      options_.sleep(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<std::chrono::milliseconds::rep>(static_cast<double>(backoff.count()) * options_.backoff_factor));
    }
    ++wire_attempts_;
    try {
      return transport_->send(request);
    } catch (const TransportError& e) {
      last_error = e.what();
      spdlog::warn("oracle '{}' attempt {} failed: {}", request.oracle_id, attempt + 1, last_error);
    }
  }
  throw TransportError("oracle '" + request.oracle_id + "' failed after " + std::to_string(options_.retries + 1) +
                           " attempts: " + last_error,
                       request);
}

void OracleClient::remember(const std::string& digest, const OracleRequest& request, const std::string& completion) {
  std::lock_guard lock(mutex_);
  OracleCacheEntry entry{digest, completion, options_.clock(), request.oracle_id};
  if (options_.cache_path) {
    std::ofstream out(*options_.cache_path, std::ios::app);
    const nlohmann::json line = {{"hash", entry.hash},
                                 {"completion", entry.completion},
                                 {"timestamp", entry.timestamp},
                                 {"oracle_id", entry.oracle_id}};
    out << line.dump() << '\n';
    if (!out) spdlog::warn("could not append to oracle cache {}", options_.cache_path->string());
  }
  cache_.insert_or_assign(digest, std::move(entry));
  pending_.erase(digest);
}

}  // namespace cdistill
