#include <cstdlib>
#include <regex>

#include "cdistill/oracle.hpp"
#include "httplib.h"

namespace cdistill {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, pattern)) throw std::invalid_argument("oracle endpoint is not an http(s) URL: " + url);
  return {m[1].str(), m[2].matched ? m[2].str() : std::string("/")};
}

class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)), url_(split_url(endpoint_.url)) {}

  std::string send(const OracleRequest& request) override {
    httplib::Client client(url_.origin);
    const auto seconds = static_cast<time_t>(endpoint_.timeout.count());
    client.set_connection_timeout(seconds, 0);
    client.set_read_timeout(seconds, 0);
    client.set_write_timeout(seconds, 0);

    httplib::Headers headers;
    if (const char* key = std::getenv(endpoint_.api_key_env.c_str()); key != nullptr && *key != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const auto body = render_request_body(request, endpoint_.model);
    auto result = client.Post(url_.path, headers, body, "application/json");
    if (!result) {
      throw TransportError("oracle request to " + url_.origin + " failed: " + httplib::to_string(result.error()),
                           request);
    }
    const int status = result->status;
    if (status == 429 || status >= 500) {
      throw TransportError("oracle returned HTTP " + std::to_string(status), request);
    }
    if (status < 200 || status >= 300) {
      throw ProtocolError("oracle returned HTTP " + std::to_string(status) + ": " + result->body.substr(0, 200));
    }
    return parse_completion_body(result->body);
  }

 private:
  HttpEndpoint endpoint_;
  ParsedUrl url_;
};

}  // namespace

std::unique_ptr<Transport> make_http_transport(HttpEndpoint endpoint) {
  return std::make_unique<HttpTransport>(std::move(endpoint));
}

}  // namespace cdistill
