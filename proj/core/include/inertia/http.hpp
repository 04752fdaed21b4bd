#pragma once

#include <string>
#include <utility>
#include <vector>

namespace inertia::http {

struct Response {
  int status = 0;
  std::string body;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

// Synchronous JSON POST. Throws Error(ProviderUnavailable) after `retries`
// additional attempts fail at the transport level or return a non-2xx status.
Response post_json(const std::string& url, const std::string& body, const Headers& headers,
                   double timeout_s, int retries);

}  // namespace inertia::http
