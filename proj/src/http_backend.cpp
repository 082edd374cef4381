#include "costforge/http_backend.hpp"

#include <cstdlib>

#include "costforge/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace costforge::llm {

HttpBackendOptions http_options_from_env(const std::string& model) {
  HttpBackendOptions options;
  options.model = model;
  if (const char* base = std::getenv("COSTFORGE_API_BASE")) options.base_url = base;
  if (const char* key = std::getenv("COSTFORGE_API_KEY")) options.api_key = key;
  if (options.base_url.empty()) throw ConfigError("COSTFORGE_API_BASE is not set");
  return options;
}

HttpChatBackend::HttpChatBackend(HttpBackendOptions options) : options_(std::move(options)) {
  const std::string& url = options_.base_url;
  std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("API base URL needs a scheme: " + url);
  std::size_t path_start = url.find('/', scheme_end + 3);
  origin_ = url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix + "/chat/completions";
}

BackendReply HttpChatBackend::chat(const ChatCall& call) {
  nlohmann::ordered_json body;
  body["model"] = options_.model;
  body["messages"] = nlohmann::ordered_json::array({{{"role", "user"}, {"content", std::string(call.prompt)}}});
  body["max_tokens"] = call.max_tokens;
  body["temperature"] = call.temperature;

  httplib::Client client(origin_);
  const auto timeout = static_cast<time_t>(options_.timeout_seconds);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw TransientBackendError("HTTP request failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw TransientBackendError("HTTP " + std::to_string(res->status) + " from " + origin_ + path_);
  if (res->status != 200)
    throw BackendError("HTTP " + std::to_string(res->status) + " from " + origin_ + path_ + ": " + res->body);

  try {
    auto doc = nlohmann::json::parse(res->body);
    BackendReply reply;
    reply.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
    if (doc.contains("usage") && doc["usage"].is_object()) {
      const auto& usage = doc["usage"];
      reply.tokens = TokenCounts{usage.value("prompt_tokens", 0), usage.value("completion_tokens", 0)};
    }
    return reply;
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("malformed chat completion response: ") + e.what());
  }
}

}  // namespace costforge::llm
