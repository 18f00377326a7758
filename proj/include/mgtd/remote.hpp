#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "httplib.h"
#include "json.hpp"
#include "mgtd/backends.hpp"
#include "mgtd/error.hpp"
#include "mgtd/promptkit.hpp"

namespace mgtd {

struct RemoteConfig {
  // Full chat-completions URL, e.g.
  // https://host/openai/deployments/x/chat/completions?api-version=...
  std::string endpoint;
  std::string model;
  std::string auth_header = "Authorization";
  std::string auth_prefix = "Bearer ";
  std::optional<std::string> token;  // resolved from the environment
  std::chrono::seconds timeout{60};
};

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // path plus query, at least "/"
};

inline SplitUrl split_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw ConfigError("endpoint '" + std::string(url) + "' lacks a scheme");
  }
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("endpoint scheme must be http or https");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string_view::npos) {
    return {std::string(url), "/"};
  }
  return {std::string(url.substr(0, path_start)),
          std::string(url.substr(path_start))};
}

// Chat-completions request: instruction as the system message, input text
// as the user message, greedy decoding.
inline nlohmann::ordered_json chat_request_body(const InstructionExample& ex,
                                                const std::string& model) {
  nlohmann::ordered_json body;
  if (!model.empty()) body["model"] = model;
  body["messages"] = nlohmann::ordered_json::array(
      {{{"role", "system"}, {"content", ex.instruction}},
       {{"role", "user"}, {"content", ex.input_text}}});
  body["temperature"] = 0;
  return body;
}

namespace detail {

inline bool is_filter_code(const nlohmann::json& v) {
  if (!v.is_string()) return false;
  const auto s = v.get<std::string>();
  return s == "content_filter" || s == "ResponsibleAIPolicyViolation";
}

}  // namespace detail

// Maps an HTTP status and body to a reply. Content-filter error objects and
// finish_reason "content_filter" map to filtered; 2xx with assistant text
// maps to text; everything else is a transport error.
inline BackendReply parse_chat_response(int status, std::string_view body) {
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  const bool is_json = !j.is_discarded() && j.is_object();
  if (is_json && j.contains("error") && j["error"].is_object()) {
    const auto& err = j["error"];
    std::string message = err.value("message", std::string{});
    bool filtered = detail::is_filter_code(err.value("code", nlohmann::json{}));
    if (auto inner = err.find("innererror");
        inner != err.end() && inner->is_object()) {
      filtered = filtered ||
                 detail::is_filter_code(inner->value("code", nlohmann::json{}));
    }
    if (filtered) return {BackendReply::Kind::filtered, message, {}};
    return {BackendReply::Kind::transport_error,
            "HTTP " + std::to_string(status) + ": " + message,
            {}};
  }
  if (status < 200 || status >= 300 || !is_json) {
    return {BackendReply::Kind::transport_error,
            "HTTP " + std::to_string(status) + ": " + std::string(body),
            {}};
  }
  auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_array() || choices->empty()) {
    return {BackendReply::Kind::transport_error, "response has no choices",
            {}};
  }
  const auto& choice = (*choices)[0];
  std::string content;
  if (auto msg = choice.find("message");
      msg != choice.end() && msg->is_object()) {
    if (auto c = msg->find("content"); c != msg->end() && c->is_string()) {
      content = c->get<std::string>();
    }
  }
  if (choice.value("finish_reason", std::string{}) == "content_filter") {
    return {BackendReply::Kind::filtered,
            content.empty() ? std::string("content_filter") : content,
            {}};
  }
  return {BackendReply::Kind::text, std::move(content), {}};
}

class RemoteChatBackend final : public Backend {
 public:
  explicit RemoteChatBackend(RemoteConfig config)
      : config_(std::move(config)), url_(split_url(config_.endpoint)) {}

  BackendReply complete(const InstructionExample& example) const override {
    httplib::Client client(url_.origin);
    const auto t = config_.timeout;
    client.set_connection_timeout(t);
    client.set_read_timeout(t);
    client.set_write_timeout(t);
    httplib::Headers headers;
    if (config_.token) {
      headers.emplace(config_.auth_header, config_.auth_prefix + *config_.token);
    }
    const auto body = chat_request_body(example, config_.model).dump();
    auto res = client.Post(url_.path, headers, body, "application/json");
    if (!res) {
      return {BackendReply::Kind::transport_error,
              "request failed: " + httplib::to_string(res.error()),
              {}};
    }
    return parse_chat_response(res->status, res->body);
  }

 private:
  RemoteConfig config_;
  SplitUrl url_;
};

}  // namespace mgtd
