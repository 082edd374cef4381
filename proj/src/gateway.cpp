#include "costforge/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "costforge/error.hpp"
#include "costforge/text.hpp"
#include "json.hpp"

namespace costforge::llm {

double SteadyClock::now() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

void SteadyClock::sleep_for(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

double FakeClock::now() {
  std::lock_guard lock(mu_);
  return now_;
}

void FakeClock::advance(double seconds) {
  std::lock_guard lock(mu_);
  if (seconds > 0) now_ += seconds;
}

// --- scripted backend ----------------------------------------------------------

std::vector<ScriptEntry> parse_script(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("script is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw ConfigError("script must be a JSON array of entries");
  std::vector<ScriptEntry> script;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& item = doc[i];
    if (!item.is_object()) throw ConfigError("script entry " + std::to_string(i) + " is not an object");
    ScriptEntry entry;
    try {
      if (item.contains("match")) {
        const auto& m = item["match"];
        if (m.is_string()) {
          entry.match_all.push_back(m.get<std::string>());
        } else {
          entry.match_all = m.get<std::vector<std::string>>();
        }
      }
      entry.response = item.value("response", std::string{});
      entry.fail = item.value("fail", false);
      entry.repeat = item.value("repeat", false);
      entry.delay_seconds = item.value("delay_seconds", 0.0);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("script entry " + std::to_string(i) + ": " + e.what());
    }
    script.push_back(std::move(entry));
  }
  return script;
}

std::vector<ScriptEntry> load_script(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read script " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_script(buf.str());
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> script, std::shared_ptr<Clock> clock)
    : script_(std::move(script)), consumed_(script_.size(), false), clock_(std::move(clock)) {}

BackendReply ScriptedBackend::chat(const ChatCall& call) {
  ScriptEntry entry;
  {
    std::lock_guard lock(mu_);
    prompts_.emplace_back(call.prompt);
    std::size_t i = 0;
    for (; i < script_.size(); ++i) {
      if (consumed_[i]) continue;
      const auto& m = script_[i].match_all;
      if (std::all_of(m.begin(), m.end(), [&](const std::string& s) { return text::contains(call.prompt, s); }))
        break;
    }
    if (i == script_.size()) {
      std::string head(call.prompt.substr(0, 120));
      throw ScriptExhausted("no script entry left for prompt: " + head);
    }
    if (!script_[i].repeat) consumed_[i] = true;
    entry = script_[i];
  }
  if (entry.delay_seconds > 0 && clock_) clock_->sleep_for(entry.delay_seconds);
  if (entry.fail) throw TransientBackendError("scripted failure");
  return BackendReply{entry.response, std::nullopt};
}

std::size_t ScriptedBackend::call_count() const {
  std::lock_guard lock(mu_);
  return prompts_.size();
}

std::vector<std::string> ScriptedBackend::prompts() const {
  std::lock_guard lock(mu_);
  return prompts_;
}

// --- rate limiter ------------------------------------------------------------------

RateLimiter::RateLimiter(double requests_per_minute, std::shared_ptr<Clock> clock, double burst)
    : rate_per_second_(requests_per_minute / 60.0),
      capacity_(std::max(1.0, burst)),
      tokens_(capacity_),
      clock_(std::move(clock)) {}

void RateLimiter::acquire() {
  if (rate_per_second_ <= 0) return;
  double wait = 0.0;
  {
    std::lock_guard lock(mu_);
    const double now = clock_->now();
    if (!started_) {
      started_ = true;
      last_ = now;
    }
    tokens_ = std::min(capacity_, tokens_ + (now - last_) * rate_per_second_);
    last_ = now;
    tokens_ -= 1.0;
    if (tokens_ < 0) wait = -tokens_ / rate_per_second_;
  }
  if (wait > 0) clock_->sleep_for(wait);
}

// --- gateway ---------------------------------------------------------------------------

double RetryPolicy::nominal_delay(int attempt) const { return base_delay_seconds * std::ldexp(1.0, attempt); }

Gateway::Gateway(TemplateStore templates, GatewayOptions options, std::shared_ptr<Clock> clock)
    : templates_(std::move(templates)), options_(options), clock_(std::move(clock)), rng_(options.seed) {
  if (options_.retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
  if (options_.retry.jitter < 0 || options_.retry.jitter >= 1) throw ConfigError("retry.jitter must be in [0, 1)");
}

void Gateway::register_backend(const std::string& tag, std::shared_ptr<ChatBackend> backend,
                               double requests_per_minute) {
  if (!backend) throw ConfigError("null backend for tag '" + tag + "'");
  std::lock_guard lock(registry_mu_);
  Registered reg;
  reg.backend = std::move(backend);
  if (requests_per_minute > 0) reg.limiter = std::make_unique<RateLimiter>(requests_per_minute, clock_);
  backends_.insert_or_assign(tag, std::move(reg));
}

std::shared_ptr<ScriptedBackend> Gateway::register_scripted_backend(const std::string& tag,
                                                                    std::vector<ScriptEntry> script) {
  if (script.empty()) throw ConfigError("scripted backend '" + tag + "' needs a non-empty script");
  auto backend = std::make_shared<ScriptedBackend>(std::move(script), clock_);
  register_backend(tag, backend);
  return backend;
}

bool Gateway::has_backend(const std::string& tag) const {
  std::lock_guard lock(registry_mu_);
  return backends_.count(tag) != 0;
}

Gateway::Registered& Gateway::lookup(const std::string& tag) {
  std::lock_guard lock(registry_mu_);
  auto it = backends_.find(tag);
  if (it == backends_.end()) throw BackendUnavailable("no backend registered under tag '" + tag + "'");
  return it->second;
}

void Gateway::reserve_call() {
  if (options_.max_tokens > 0 && tokens_.load() >= options_.max_tokens)
    throw BudgetExceeded("token budget of " + std::to_string(options_.max_tokens) + " exhausted");
  std::size_t previous = calls_.fetch_add(1);
  if (options_.max_calls > 0 && previous >= options_.max_calls) {
    calls_.fetch_sub(1);
    throw BudgetExceeded("call budget of " + std::to_string(options_.max_calls) + " exhausted");
  }
}

double Gateway::jitter_factor() {
  if (options_.retry.jitter == 0) return 1.0;
  std::lock_guard lock(rng_mu_);
  std::uniform_real_distribution<double> dist(1.0 - options_.retry.jitter, 1.0 + options_.retry.jitter);
  return dist(rng_);
}

CompletionResult Gateway::complete(const CompletionRequest& request) {
  if (request.max_tokens < 1) throw DomainError("max_tokens must be >= 1");
  if (!(request.temperature >= 0)) throw DomainError("temperature must be >= 0");
  Registered& reg = lookup(request.backend_tag);
  CompletionResult result;
  result.prompt = templates_.render(request.template_id, request.bindings);

  const double start = clock_->now();
  std::string last_error;
  for (int attempt = 0; attempt < options_.retry.max_attempts; ++attempt) {
    reserve_call();
    if (reg.limiter) reg.limiter->acquire();
    try {
      BackendReply reply = reg.backend->chat({result.prompt, request.max_tokens, request.temperature});
      if (reply.tokens) tokens_ += static_cast<std::size_t>(reply.tokens->prompt + reply.tokens->completion);
      result.text = std::move(reply.text);
      result.token_counts = reply.tokens;
      result.attempt_count = attempt + 1;
      result.latency_seconds = std::max(0.0, clock_->now() - start);
      return result;
    } catch (const TransientBackendError& e) {
      last_error = e.what();
    }
    if (attempt + 1 < options_.retry.max_attempts)
      clock_->sleep_for(options_.retry.nominal_delay(attempt) * jitter_factor());
  }
  throw BackendUnavailable("backend '" + request.backend_tag + "' failed " +
                           std::to_string(options_.retry.max_attempts) + " attempts; last error: " + last_error);
}

CompletionResult ModelHandle::complete(TemplateId id, const Bindings& bindings) const {
  if (!gateway) throw ConfigError("model handle for '" + tag + "' has no gateway");
  CompletionRequest request;
  request.template_id = id;
  request.bindings = bindings;
  request.max_tokens = settings.max_tokens;
  request.temperature = settings.temperature;
  request.backend_tag = tag;
  return gateway->complete(request);
}

}  // namespace costforge::llm
