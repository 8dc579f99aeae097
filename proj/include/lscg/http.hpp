#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>

// <resolv.h> (pulled in by httplib) defines _res, which collides with Eigen parameter names.
#ifdef _res
#undef _res
#endif

#include "lscg/errors.hpp"

namespace lscg::http {

/// Retry policy for remote calls: transport errors, HTTP 429 and 5xx are retried.
struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
  std::chrono::seconds timeout{120};
  /// Replaceable for tests.
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };
};

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;    // begins with '/', may be "/"
};

inline Url split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("URL without scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

/// Joins a base URL (which may carry a path prefix) and an endpoint path.
inline std::string join_path(std::string base, std::string_view suffix) {
  while (!base.empty() && base.back() == '/') base.pop_back();
  if (!suffix.empty() && suffix.front() != '/') base += '/';
  base += suffix;
  return base;
}

struct Response {
  int status = 0;
  std::string body;
  int attempts = 0;
};

inline bool retryable_status(int status) { return status == 429 || (status >= 500 && status < 600); }

/// POSTs a JSON body. Returns the final response (2xx or non-retryable
/// status). Throws TransportError once retries are exhausted.
inline Response post_json(const std::string& url, const std::string& body,
                          const std::string& bearer_token, const RetryPolicy& policy) {
  Url u = split_url(url);
  auto backoff = policy.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= policy.attempts; ++attempt) {
    httplib::Client cli(u.origin);
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(policy.timeout));
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(policy.timeout));
    cli.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(policy.timeout));
    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);
    auto res = cli.Post(u.path, headers, body, "application/json");
    if (res) {
      if (!retryable_status(res->status)) return {res->status, res->body, attempt};
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
    } else {
      last_error = httplib::to_string(res.error());
    }
    if (attempt < policy.attempts) {
      policy.sleep(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(backoff.count()) * policy.multiplier));
    }
  }
  throw TransportError("POST " + url + " failed after " + std::to_string(policy.attempts) +
                       " attempts: " + last_error);
}

}  // namespace lscg::http
