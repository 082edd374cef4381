#pragma once

// HTTP facade over the reward engine.
//
//   POST /v1/reward         one reward request     -> breakdown
//   POST /v1/reward/batch   {"requests": [...]}    -> {"breakdowns": [...]}
//   POST /v1/advantages     {"rewards": [...]}     -> {"advantages": [...]}
//   GET  /healthz
//
// Every response carries X-CostForge-Config-Hash. Errors are
// {"error": <kind>, "message": <text>} with 400 for malformed bodies, 422 for
// invariant violations and 503 when the judge cannot produce a verdict.

#include <memory>
#include <string>
#include <thread>

#include "costforge/gateway.hpp"
#include "costforge/records.hpp"
#include "costforge/reward.hpp"

namespace costforge::service {

inline constexpr const char* kConfigHashHeader = "X-CostForge-Config-Hash";

struct Response {
  int status = 200;
  records::Json body;
};

/// The endpoint logic without any networking. Thread-safe: the only state is
/// the immutable config and the judge handle.
class RewardHandler {
 public:
  RewardHandler(reward::RewardConfig cfg, llm::ModelHandle judge);

  Response reward(const std::string& body) const;
  Response reward_batch(const std::string& body) const;
  Response advantages(const std::string& body) const;
  Response health() const;

  const reward::RewardConfig& config() const noexcept { return cfg_; }
  const std::string& config_hash() const noexcept { return hash_; }

 private:
  reward::RewardConfig cfg_;
  llm::ModelHandle judge_;
  std::string hash_;
};

class RewardServer {
 public:
  explicit RewardServer(std::shared_ptr<const RewardHandler> handler);
  ~RewardServer();
  RewardServer(const RewardServer&) = delete;
  RewardServer& operator=(const RewardServer&) = delete;

  /// Binds `host:port`; port 0 picks a free port. Returns the bound port.
  /// Throws ConfigError when binding fails.
  int bind(const std::string& host, int port);
  /// Serves on a background thread until stop().
  void start();
  /// Serves on the calling thread until stop() is called from elsewhere.
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

}  // namespace costforge::service
