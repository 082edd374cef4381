#pragma once

#include <string>

#include "costforge/gateway.hpp"

namespace costforge::llm {

struct HttpBackendOptions {
  /// e.g. "https://api.openai.com/v1"; "/chat/completions" is appended.
  std::string base_url;
  std::string api_key;
  std::string model;
  double timeout_seconds = 120.0;
};

/// Reads COSTFORGE_API_BASE and COSTFORGE_API_KEY. Throws ConfigError when the
/// base URL is unset.
HttpBackendOptions http_options_from_env(const std::string& model);

/// Chat-completion client. Request body {model, messages:[{role,content}],
/// max_tokens, temperature}; the reply is the first choice's message content.
/// 429, 5xx and connection failures are transient.
class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendOptions options);
  BackendReply chat(const ChatCall& call) override;

 private:
  HttpBackendOptions options_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;    // path prefix + /chat/completions
};

}  // namespace costforge::llm
