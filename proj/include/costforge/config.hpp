#pragma once

// Application configuration (one JSON file) and the runtime wiring it
// describes: a gateway with one backend per tag and a model handle per role.
// Only secrets come from the environment.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "costforge/gateway.hpp"
#include "costforge/pipeline.hpp"
#include "costforge/reward.hpp"

namespace costforge::config {

enum class BackendType { Mock, Http };

struct BackendSpec {
  BackendType type = BackendType::Mock;
  /// Script path for mock backends, model name for http backends.
  std::string target;
  /// http only; empty means COSTFORGE_API_BASE.
  std::string base_url;
  /// 0 disables limiting; http backends then fall back to COSTFORGE_RPM.
  double requests_per_minute = 0.0;
};

/// Parses "[TAG=]mock:PATH" or "[TAG=]http:MODEL". The tag defaults to
/// "default". Throws ConfigError.
std::pair<std::string, BackendSpec> parse_backend_flag(const std::string& flag);

struct AppConfig {
  /// tag -> backend
  std::map<std::string, BackendSpec> backends;
  /// Backend tag per role: analyzer, generator, reasoner, judge.
  std::map<std::string, std::string> roles;
  reward::RewardConfig reward;
  pipeline::PipelineConfig pipeline;
  llm::GenerationSettings analysis{2048, 0.0};
  llm::GenerationSettings trace{2048, 0.7};
  llm::GenerationSettings judging{2048, 0.0};
  llm::RetryPolicy retry;
  std::size_t max_calls = 0;
  std::size_t max_tokens = 0;
  std::filesystem::path prompts_dir;
  std::uint64_t seed = 0;
  int group_size = 5;
};

inline const std::vector<std::string>& role_names() {
  static const std::vector<std::string> names = {"analyzer", "generator", "reasoner", "judge"};
  return names;
}

/// Relative paths in the file resolve against its directory. Unknown keys are
/// rejected. Throws ConfigError or IoError.
AppConfig load_config(const std::filesystem::path& path);
AppConfig config_from_json(const std::string& json_text, const std::filesystem::path& base_dir = {});

/// Roles without a tag use "default" (the analyzer falls back to the
/// generator's tag). Throws ConfigError when a role's tag has no backend.
void resolve_roles(AppConfig& cfg);

/// Hex digest of the canonical reward config, echoed by the reward service.
std::string reward_config_hash(const reward::RewardConfig& cfg);

struct Runtime {
  std::unique_ptr<llm::Gateway> gateway;
  pipeline::Roles roles;
  std::map<std::string, std::shared_ptr<llm::ScriptedBackend>> scripted;
};

/// Registers every backend and binds the roles. Call resolve_roles first.
Runtime build_runtime(const AppConfig& cfg, std::shared_ptr<llm::Clock> clock = std::make_shared<llm::SteadyClock>());

}  // namespace costforge::config
