//
// SPDX-License-Identifier: Apache-2.0
//

#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "molgraph/instructgen.h"

namespace molgraph::instructgen {

HttpBackend::HttpBackend(HttpOptions options) : options_(std::move(options)) {
  constexpr std::string_view scheme = "http://";
  const std::string &url = options_.endpoint;
  if (!url.starts_with(scheme))
    throw std::invalid_argument("endpoint must be an http:// URL: " + url);
  const auto slash = url.find('/', scheme.size());
  host_ = url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
  if (host_.size() == scheme.size()) throw std::invalid_argument("endpoint has no host: " + url);
}

HttpOptions HttpBackend::options_from_env(std::string endpoint) {
  HttpOptions o;
  o.endpoint = std::move(endpoint);
  if (const char *t = std::getenv("MOLGRAPH_BACKEND_TOKEN")) o.token = t;
  return o;
}

std::string HttpBackend::complete(const std::string &prompt) {
  httplib::Client client(host_);
  const auto secs = static_cast<time_t>(options_.timeout.count());
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  httplib::Headers headers;
  if (!options_.token.empty()) headers.emplace("Authorization", "Bearer " + options_.token);
  const std::string body = nlohmann::json{{"prompt", prompt}}.dump();

  auto delay = options_.initial_backoff;
  for (std::size_t attempt = 0;; ++attempt) {
    const auto res = client.Post(path_, headers, body, "application/json");
    if (!res)
      throw BackendFailure("request to " + options_.endpoint + " failed: " +
                           httplib::to_string(res.error()));
    if (res->status == 200) {
      const auto j = nlohmann::json::parse(res->body, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("completion") ||
          !j["completion"].is_string())
        throw BackendFailure("response has no completion string");
      return j["completion"].get<std::string>();
    }
    const bool retryable = res->status == 429 || res->status == 503;
    if (!retryable || attempt >= options_.max_retries)
      throw BackendFailure("backend returned HTTP " + std::to_string(res->status) +
                           (retryable ? " after retries" : ""));
    std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

}  // namespace molgraph::instructgen
