#pragma once

// Backend-agnostic chat completion: template rendering, retries with jittered
// exponential backoff, per-backend rate limiting, call/token budgets, and a
// scripted backend for deterministic tests.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "costforge/templates.hpp"

namespace costforge::llm {

/// Time source for latency, backoff and rate limiting. Seconds as doubles.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() = 0;
  virtual void sleep_for(double seconds) = 0;
};

class SteadyClock final : public Clock {
 public:
  double now() override;
  void sleep_for(double seconds) override;
};

/// Manual clock: sleeping advances time instantly.
class FakeClock final : public Clock {
 public:
  explicit FakeClock(double start = 0.0) : now_(start) {}
  double now() override;
  void sleep_for(double seconds) override { advance(seconds); }
  void advance(double seconds);

 private:
  std::mutex mu_;
  double now_;
};

struct TokenCounts {
  int prompt = 0;
  int completion = 0;

  bool operator==(const TokenCounts&) const = default;
};

struct ChatCall {
  std::string_view prompt;
  int max_tokens = 2048;
  double temperature = 0.0;
};

struct BackendReply {
  std::string text;
  std::optional<TokenCounts> tokens;
};

/// One model endpoint. Implementations throw TransientBackendError for
/// failures worth retrying and BackendError for the rest.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual BackendReply chat(const ChatCall& call) = 0;
};

/// Wraps a function; handy for deterministic test doubles that compute the
/// reply from the prompt.
class CallbackBackend final : public ChatBackend {
 public:
  using Fn = std::function<BackendReply(const ChatCall&)>;
  explicit CallbackBackend(Fn fn) : fn_(std::move(fn)) {}
  BackendReply chat(const ChatCall& call) override { return fn_(call); }

 private:
  Fn fn_;
};

struct ScriptEntry {
  /// Every substring must occur in the rendered prompt. Empty matches anything.
  std::vector<std::string> match_all;
  std::string response;
  /// Raise a transient failure instead of replying.
  bool fail = false;
  /// Serve any number of calls instead of being consumed once.
  bool repeat = false;
  /// Simulated model time, slept on the backend's clock.
  double delay_seconds = 0.0;
};

/// Parses the JSON script format: an array of
/// {"match": string | [strings], "response": string, "fail": bool,
///  "repeat": bool, "delay_seconds": number}.
std::vector<ScriptEntry> parse_script(std::string_view json_text);
std::vector<ScriptEntry> load_script(const std::filesystem::path& path);

/// Each call takes the first unconsumed entry whose matcher accepts the
/// prompt. Calls are served under one lock, in arrival order.
class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptEntry> script, std::shared_ptr<Clock> clock = nullptr);

  BackendReply chat(const ChatCall& call) override;

  std::size_t call_count() const;
  std::vector<std::string> prompts() const;

 private:
  mutable std::mutex mu_;
  std::vector<ScriptEntry> script_;
  std::vector<bool> consumed_;
  std::vector<std::string> prompts_;
  std::shared_ptr<Clock> clock_;
};

/// Token bucket. `requests_per_minute` <= 0 disables limiting.
class RateLimiter {
 public:
  RateLimiter(double requests_per_minute, std::shared_ptr<Clock> clock, double burst = 1.0);
  void acquire();

 private:
  std::mutex mu_;
  double rate_per_second_;
  double capacity_;
  double tokens_;
  double last_ = 0.0;
  bool started_ = false;
  std::shared_ptr<Clock> clock_;
};

struct RetryPolicy {
  int max_attempts = 5;
  double base_delay_seconds = 0.5;
  /// Each delay is scaled by a uniform factor in [1 - jitter, 1 + jitter].
  double jitter = 0.2;

  /// Delay slept after the failed attempt number `attempt` (0-based):
  /// base * 2^attempt, before jitter.
  double nominal_delay(int attempt) const;
};

struct GatewayOptions {
  RetryPolicy retry;
  /// Total backend attempts allowed; 0 means unlimited.
  std::size_t max_calls = 0;
  /// Total reported tokens allowed; 0 means unlimited.
  std::size_t max_tokens = 0;
  std::uint64_t seed = 0;
};

struct CompletionRequest {
  TemplateId template_id = TemplateId::StructureSelect;
  Bindings bindings;
  int max_tokens = 2048;
  double temperature = 0.0;
  std::string backend_tag;
};

struct CompletionResult {
  std::string text;
  /// Total elapsed time including rate-limit waits and backoff.
  double latency_seconds = 0.0;
  std::optional<TokenCounts> token_counts;
  int attempt_count = 1;
  std::string prompt;
};

class Gateway {
 public:
  explicit Gateway(TemplateStore templates = TemplateStore::embedded(), GatewayOptions options = {},
                   std::shared_ptr<Clock> clock = std::make_shared<SteadyClock>());

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void register_backend(const std::string& tag, std::shared_ptr<ChatBackend> backend,
                        double requests_per_minute = 0.0);
  /// Throws ConfigError for an empty script.
  std::shared_ptr<ScriptedBackend> register_scripted_backend(const std::string& tag,
                                                             std::vector<ScriptEntry> script);
  bool has_backend(const std::string& tag) const;

  /// Renders, rate-limits and calls the backend, retrying transient failures.
  /// Throws MissingBinding, BackendUnavailable, BudgetExceeded, or whatever
  /// non-transient error the backend raised.
  CompletionResult complete(const CompletionRequest& request);

  std::string render(TemplateId id, const Bindings& bindings) const { return templates_.render(id, bindings); }
  const TemplateStore& templates() const noexcept { return templates_; }
  Clock& clock() noexcept { return *clock_; }
  std::shared_ptr<Clock> shared_clock() const noexcept { return clock_; }

  std::size_t calls_made() const noexcept { return calls_.load(); }
  std::size_t tokens_used() const noexcept { return tokens_.load(); }

 private:
  struct Registered {
    std::shared_ptr<ChatBackend> backend;
    std::unique_ptr<RateLimiter> limiter;
  };

  Registered& lookup(const std::string& tag);
  void reserve_call();
  double jitter_factor();

  TemplateStore templates_;
  GatewayOptions options_;
  std::shared_ptr<Clock> clock_;

  mutable std::mutex registry_mu_;
  std::map<std::string, Registered> backends_;

  std::mutex rng_mu_;
  std::mt19937_64 rng_;

  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> tokens_{0};
};

struct GenerationSettings {
  int max_tokens = 2048;
  double temperature = 0.0;
};

/// A backend tag bound to a gateway with the settings one role uses.
struct ModelHandle {
  Gateway* gateway = nullptr;
  std::string tag;
  GenerationSettings settings;

  CompletionResult complete(TemplateId id, const Bindings& bindings) const;
  std::string render(TemplateId id, const Bindings& bindings) const { return gateway->render(id, bindings); }
};

}  // namespace costforge::llm
