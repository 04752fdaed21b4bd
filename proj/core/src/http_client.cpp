#include "inertia/http.hpp"

#include <httplib.h>

#include "inertia/error.hpp"

namespace inertia::http {

namespace {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Url split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorCode::InvalidConfig, "endpoint is not a URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

Response post_json(const std::string& url, const std::string& body, const Headers& headers,
                   double timeout_s, int retries) {
  const Url target = split_url(url);
  httplib::Client client(target.origin);
  const auto seconds = static_cast<time_t>(timeout_s);
  const auto micros = static_cast<time_t>((timeout_s - static_cast<double>(seconds)) * 1e6);
  client.set_connection_timeout(seconds, micros);
  client.set_read_timeout(seconds, micros);
  client.set_write_timeout(seconds, micros);

  httplib::Headers hdrs;
  for (const auto& [k, v] : headers) hdrs.emplace(k, v);

  std::string last_error;
  const int attempts = retries + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    auto result = client.Post(target.path, hdrs, body, "application/json");
    if (!result) {
      last_error = httplib::to_string(result.error());
      continue;
    }
    if (result->status >= 200 && result->status < 300) return {result->status, result->body};
    last_error = "HTTP " + std::to_string(result->status);
  }
  fail(ErrorCode::ProviderUnavailable, url + ": " + last_error + " after " +
                                           std::to_string(attempts) + " attempts (" +
                                           std::to_string(retries) + " retries)");
}

}  // namespace inertia::http
