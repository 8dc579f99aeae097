#pragma once

// Chat-completion endpoints. The wire protocol is the OpenAI-compatible
// POST {base_url}/v1/chat/completions.

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lscg/errors.hpp"
#include "lscg/http.hpp"

namespace lscg::llm {

struct Message {
  std::string role;
  std::string content;
  bool operator==(const Message&) const = default;
};

struct ChatRequest {
  std::string model;
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_tokens = 4096;
  bool operator==(const ChatRequest&) const = default;
};

struct ChatResponse {
  std::string content;
  std::string finish_reason;  // "stop", "length", ... ("" when the server omits it)
  std::string model;          // as reported by the server
};

/// One request/response pair, stored verbatim.
struct ChatExchange {
  ChatRequest request;
  std::string response_text;
  std::string finish_reason;
  std::string endpoint_model;
  double latency_ms = 0.0;
  std::string error;  // transport failure; response fields are then empty
};

class ChatEndpoint {
 public:
  virtual ~ChatEndpoint() = default;
  /// Throws TransportError when the endpoint cannot be reached after retries.
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

/// Endpoint backed by a callable (stubs, scripted replays).
class FunctionEndpoint final : public ChatEndpoint {
 public:
  explicit FunctionEndpoint(std::function<ChatResponse(const ChatRequest&)> fn) : fn_(std::move(fn)) {}
  ChatResponse complete(const ChatRequest& r) override { return fn_(r); }

 private:
  std::function<ChatResponse(const ChatRequest&)> fn_;
};

inline nlohmann::ordered_json to_json(const ChatRequest& r) {
  nlohmann::ordered_json msgs = nlohmann::ordered_json::array();
  for (const auto& m : r.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", r.model}, {"messages", msgs}, {"temperature", r.temperature}, {"max_tokens", r.max_tokens}};
}

inline ChatRequest request_from_json(const nlohmann::json& j) {
  ChatRequest r;
  r.model = j.at("model").get<std::string>();
  for (const auto& m : j.at("messages")) r.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
  r.temperature = j.at("temperature").get<double>();
  r.max_tokens = j.at("max_tokens").get<int>();
  return r;
}

class OpenAIChatEndpoint final : public ChatEndpoint {
 public:
  OpenAIChatEndpoint(std::string base_url, std::string api_key = {}, http::RetryPolicy retry = {})
      : url_(http::join_path(std::move(base_url), "/v1/chat/completions")),
        api_key_(std::move(api_key)),
        retry_(std::move(retry)) {}

  const std::string& url() const { return url_; }

  ChatResponse complete(const ChatRequest& request) override {
    auto res = http::post_json(url_, to_json(request).dump(), api_key_, retry_);
    if (res.status < 200 || res.status >= 300)
      throw TransportError("chat endpoint returned HTTP " + std::to_string(res.status) + ": " +
                           res.body.substr(0, 200));
    return parse_response(res.body);
  }

  static ChatResponse parse_response(const std::string& body) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) throw TransportError("chat endpoint returned non-JSON body");
    try {
      const auto& choice = j.at("choices").at(0);
      ChatResponse r;
      const auto& content = choice.at("message").at("content");
      r.content = content.is_null() ? std::string() : content.get<std::string>();
      if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
        r.finish_reason = choice["finish_reason"].get<std::string>();
      if (j.contains("model") && j["model"].is_string()) r.model = j["model"].get<std::string>();
      return r;
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("malformed chat response: ") + e.what());
    }
  }

 private:
  std::string url_;
  std::string api_key_;
  http::RetryPolicy retry_;
};

/// Sends one request and records it; transport errors are captured, not thrown.
inline ChatExchange exchange(ChatEndpoint& ep, ChatRequest req) {
  ChatExchange ex;
  auto t0 = std::chrono::steady_clock::now();
  try {
    auto r = ep.complete(req);
    ex.response_text = std::move(r.content);
    ex.finish_reason = std::move(r.finish_reason);
    ex.endpoint_model = r.model.empty() ? req.model : std::move(r.model);
  } catch (const TransportError& e) {
    ex.error = e.what();
  }
  ex.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  ex.request = std::move(req);
  return ex;
}

inline nlohmann::ordered_json to_json(const ChatExchange& e) {
  nlohmann::ordered_json j;
  j["request"] = to_json(e.request);
  j["response_text"] = e.response_text;
  j["finish_reason"] = e.finish_reason;
  j["endpoint_model"] = e.endpoint_model;
  j["latency_ms"] = e.latency_ms;
  if (!e.error.empty()) j["error"] = e.error;
  return j;
}

inline ChatExchange exchange_from_json(const nlohmann::json& j) {
  ChatExchange e;
  e.request = request_from_json(j.at("request"));
  e.response_text = j.at("response_text").get<std::string>();
  e.finish_reason = j.value("finish_reason", "");
  e.endpoint_model = j.value("endpoint_model", "");
  e.latency_ms = j.value("latency_ms", 0.0);
  e.error = j.value("error", "");
  return e;
}

}  // namespace lscg::llm
