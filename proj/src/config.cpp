#include "costforge/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "costforge/error.hpp"
#include "costforge/http_backend.hpp"
#include "costforge/records.hpp"
#include "costforge/text.hpp"

namespace costforge::config {

using records::Json;

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
T get_as(const Json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

void read_generation(const Json& j, const char* key, llm::GenerationSettings& slot) {
  if (!j.contains(key)) return;
  const std::string where = std::string("generation.") + key;
  reject_unknown(j[key], {"max_tokens", "temperature"}, where);
  if (j[key].contains("max_tokens")) slot.max_tokens = get_as<int>(j[key], "max_tokens", where);
  if (j[key].contains("temperature")) slot.temperature = get_as<double>(j[key], "temperature", where);
  if (slot.max_tokens < 1) throw ConfigError(where + ".max_tokens must be >= 1");
  if (slot.temperature < 0) throw ConfigError(where + ".temperature must be >= 0");
}

}  // namespace

std::pair<std::string, BackendSpec> parse_backend_flag(const std::string& flag) {
  std::string tag = "default";
  std::string rest = flag;
  const auto eq = flag.find('=');
  const auto colon = flag.find(':');
  if (eq != std::string::npos && (colon == std::string::npos || eq < colon)) {
    tag = flag.substr(0, eq);
    rest = flag.substr(eq + 1);
  }
  const auto sep = rest.find(':');
  if (tag.empty() || sep == std::string::npos || sep + 1 == rest.size())
    throw ConfigError("backend must look like [TAG=]mock:PATH or [TAG=]http:MODEL, got '" + flag + "'");
  BackendSpec spec;
  const std::string type = rest.substr(0, sep);
  if (type == "mock") {
    spec.type = BackendType::Mock;
  } else if (type == "http") {
    spec.type = BackendType::Http;
  } else {
    throw ConfigError("unknown backend type '" + type + "'");
  }
  spec.target = rest.substr(sep + 1);
  return {tag, spec};
}

AppConfig config_from_json(const std::string& json_text, const std::filesystem::path& base_dir) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"backends", "roles", "reward", "pipeline", "generation", "retry", "budget", "prompts_dir", "seed",
                     "group_size"},
                 "config");
  AppConfig cfg;
  if (j.contains("backends") && !j["backends"].is_object()) throw ConfigError("backends must be an object");
  const Json backends = j.value("backends", Json::object());
  for (const auto& [tag, b] : backends.items()) {
    const std::string where = "backends." + tag;
    reject_unknown(b, {"type", "script", "model", "base_url", "rpm"}, where);
    BackendSpec spec;
    const std::string type = get_as<std::string>(b, "type", where);
    if (type == "mock") {
      spec.type = BackendType::Mock;
      spec.target = resolve(base_dir, get_as<std::string>(b, "script", where)).string();
    } else if (type == "http") {
      spec.type = BackendType::Http;
      spec.target = get_as<std::string>(b, "model", where);
      if (b.contains("base_url")) spec.base_url = get_as<std::string>(b, "base_url", where);
    } else {
      throw ConfigError(where + ".type must be \"mock\" or \"http\"");
    }
    if (b.contains("rpm")) spec.requests_per_minute = get_as<double>(b, "rpm", where);
    cfg.backends[tag] = spec;
  }
  if (j.contains("roles")) {
    std::set<std::string> known(role_names().begin(), role_names().end());
    reject_unknown(j["roles"], known, "roles");
    for (const auto& [role, tag] : j["roles"].items()) {
      if (!tag.is_string()) throw ConfigError("roles." + role + " must be a string");
      cfg.roles[role] = tag.get<std::string>();
    }
  }
  if (j.contains("reward")) cfg.reward = records::reward_config_from_json(j["reward"]);
  if (j.contains("pipeline")) {
    const Json& p = j["pipeline"];
    reject_unknown(p, {"max_refine_iters", "workers", "refine_parse_retries"}, "pipeline");
    if (p.contains("max_refine_iters")) cfg.pipeline.max_refine_iters = get_as<int>(p, "max_refine_iters", "pipeline");
    if (p.contains("workers")) cfg.pipeline.workers = get_as<int>(p, "workers", "pipeline");
    if (p.contains("refine_parse_retries"))
      cfg.pipeline.refine_parse_retries = get_as<int>(p, "refine_parse_retries", "pipeline");
    if (cfg.pipeline.max_refine_iters < 0) throw ConfigError("pipeline.max_refine_iters must be >= 0");
    if (cfg.pipeline.workers < 1) throw ConfigError("pipeline.workers must be >= 1");
    if (cfg.pipeline.refine_parse_retries < 0) throw ConfigError("pipeline.refine_parse_retries must be >= 0");
  }
  if (j.contains("generation")) {
    reject_unknown(j["generation"], {"analysis", "trace", "judging"}, "generation");
    read_generation(j["generation"], "analysis", cfg.analysis);
    read_generation(j["generation"], "trace", cfg.trace);
    read_generation(j["generation"], "judging", cfg.judging);
  }
  if (j.contains("retry")) {
    const Json& r = j["retry"];
    reject_unknown(r, {"max_attempts", "base_delay_seconds", "jitter"}, "retry");
    if (r.contains("max_attempts")) cfg.retry.max_attempts = get_as<int>(r, "max_attempts", "retry");
    if (r.contains("base_delay_seconds"))
      cfg.retry.base_delay_seconds = get_as<double>(r, "base_delay_seconds", "retry");
    if (r.contains("jitter")) cfg.retry.jitter = get_as<double>(r, "jitter", "retry");
    if (cfg.retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
    if (cfg.retry.base_delay_seconds < 0) throw ConfigError("retry.base_delay_seconds must be >= 0");
    if (cfg.retry.jitter < 0 || cfg.retry.jitter >= 1) throw ConfigError("retry.jitter must be in [0, 1)");
  }
  if (j.contains("budget")) {
    const Json& b = j["budget"];
    reject_unknown(b, {"max_calls", "max_tokens"}, "budget");
    if (b.contains("max_calls")) cfg.max_calls = get_as<std::size_t>(b, "max_calls", "budget");
    if (b.contains("max_tokens")) cfg.max_tokens = get_as<std::size_t>(b, "max_tokens", "budget");
  }
  if (j.contains("prompts_dir")) cfg.prompts_dir = resolve(base_dir, get_as<std::string>(j, "prompts_dir", "config"));
  if (j.contains("seed")) cfg.seed = get_as<std::uint64_t>(j, "seed", "config");
  if (j.contains("group_size")) cfg.group_size = get_as<int>(j, "group_size", "config");
  if (cfg.group_size < 2) throw ConfigError("group_size must be >= 2");
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str(), path.parent_path());
}

void resolve_roles(AppConfig& cfg) {
  if (!cfg.roles.count("generator")) cfg.roles["generator"] = "default";
  if (!cfg.roles.count("analyzer")) cfg.roles["analyzer"] = cfg.roles["generator"];
  for (const auto& role : role_names()) {
    if (!cfg.roles.count(role)) cfg.roles[role] = "default";
    if (!cfg.backends.count(cfg.roles[role]))
      throw ConfigError("role " + role + " uses backend '" + cfg.roles[role] + "', which is not configured");
  }
}

std::string reward_config_hash(const reward::RewardConfig& cfg) {
  return text::hex64(text::fnv1a64(records::dump(records::to_json(cfg))));
}

Runtime build_runtime(const AppConfig& cfg, std::shared_ptr<llm::Clock> clock) {
  llm::TemplateStore templates =
      cfg.prompts_dir.empty() ? llm::TemplateStore::embedded() : llm::TemplateStore::from_directory(cfg.prompts_dir);
  llm::GatewayOptions options;
  options.retry = cfg.retry;
  options.max_calls = cfg.max_calls;
  options.max_tokens = cfg.max_tokens;
  options.seed = cfg.seed;

  Runtime rt;
  rt.gateway = std::make_unique<llm::Gateway>(std::move(templates), options, std::move(clock));
  for (const auto& [tag, spec] : cfg.backends) {
    if (spec.type == BackendType::Mock) {
      auto backend = std::make_shared<llm::ScriptedBackend>(llm::load_script(spec.target), rt.gateway->shared_clock());
      rt.gateway->register_backend(tag, backend, spec.requests_per_minute);
      rt.scripted[tag] = backend;
    } else {
      llm::HttpBackendOptions http;
      if (spec.base_url.empty()) {
        http = llm::http_options_from_env(spec.target);
      } else {
        http.base_url = spec.base_url;
        http.model = spec.target;
        if (const char* key = std::getenv("COSTFORGE_API_KEY")) http.api_key = key;
      }
      double rpm = spec.requests_per_minute;
      if (rpm <= 0) {
        if (const char* env = std::getenv("COSTFORGE_RPM")) {
          try {
            rpm = std::stod(env);
          } catch (const std::exception&) {
            throw ConfigError(std::string("COSTFORGE_RPM is not a number: ") + env);
          }
        }
      }
      rt.gateway->register_backend(tag, std::make_shared<llm::HttpChatBackend>(http), rpm);
    }
  }
  auto handle = [&](const std::string& role, llm::GenerationSettings settings) {
    auto it = cfg.roles.find(role);
    if (it == cfg.roles.end()) throw ConfigError("role " + role + " is unbound");
    return llm::ModelHandle{rt.gateway.get(), it->second, settings};
  };
  rt.roles.analyzer = handle("analyzer", cfg.analysis);
  rt.roles.generator = handle("generator", cfg.trace);
  rt.roles.reasoner = handle("reasoner", cfg.judging);
  rt.roles.judge = handle("judge", cfg.judging);
  return rt;
}

}  // namespace costforge::config
