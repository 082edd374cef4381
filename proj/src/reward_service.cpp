#include "costforge/reward_service.hpp"

#include <cmath>

#include "costforge/config.hpp"
#include "costforge/error.hpp"
#include "httplib.h"

namespace costforge::service {

using records::Json;

namespace {

Response error_response(int status, const char* kind, const std::string& message) {
  return {status, Json{{"error", kind}, {"message", message}}};
}

// A body that cannot be decoded into a request.
struct BadRequest : Error {
  using Error::Error;
};

Json parse_body(const std::string& body) {
  try {
    return Json::parse(body);
  } catch (const Json::parse_error& e) {
    throw BadRequest(std::string("body is not JSON: ") + e.what());
  }
}

records::RewardRequest decode_request(const Json& j) {
  try {
    return records::reward_request_from_json(j);
  } catch (const std::exception& e) {
    throw BadRequest(e.what());
  }
}

template <typename Fn>
Response guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const BadRequest& e) {
    return error_response(400, "BadRequest", e.what());
  } catch (const InvariantViolation& e) {
    return error_response(422, "InvariantViolation", e.what());
  } catch (const DomainError& e) {
    return error_response(422, "DomainError", e.what());
  } catch (const GroupTooSmall& e) {
    return error_response(422, "GroupTooSmall", e.what());
  } catch (const JudgeUnparseable& e) {
    return error_response(503, "JudgeUnparseable", e.what());
  } catch (const ScoreOutOfRange& e) {
    return error_response(503, "ScoreOutOfRange", e.what());
  } catch (const Error& e) {
    // Backend unavailable, budget exhausted, script exhausted and the like.
    return error_response(503, "JudgeUnavailable", e.what());
  }
}

}  // namespace

RewardHandler::RewardHandler(reward::RewardConfig cfg, llm::ModelHandle judge)
    : cfg_(cfg), judge_(std::move(judge)), hash_(config::reward_config_hash(cfg)) {
  reward::check_config(cfg_);
}

Response RewardHandler::reward(const std::string& body) const {
  return guarded([&] {
    const records::RewardRequest req = decode_request(parse_body(body));
    return Response{200, records::to_json(reward::score_rollout(req.input, cfg_, judge_))};
  });
}

Response RewardHandler::reward_batch(const std::string& body) const {
  return guarded([&] {
    const Json j = parse_body(body);
    if (!j.is_object() || !j.contains("requests") || !j["requests"].is_array())
      throw BadRequest("batch body must be {\"requests\": [...]}");
    std::vector<records::RewardRequest> requests;
    for (const auto& item : j["requests"]) requests.push_back(decode_request(item));
    Json out = Json::array();
    for (const auto& req : requests) out.push_back(records::to_json(reward::score_rollout(req.input, cfg_, judge_)));
    return Response{200, Json{{"breakdowns", std::move(out)}}};
  });
}

Response RewardHandler::advantages(const std::string& body) const {
  return guarded([&] {
    const Json j = parse_body(body);
    if (!j.is_object() || !j.contains("rewards") || !j["rewards"].is_array())
      throw BadRequest("advantages body must be {\"rewards\": [...]}");
    std::vector<double> rewards;
    for (const auto& r : j["rewards"]) {
      if (!r.is_number()) throw BadRequest("rewards must be numbers");
      rewards.push_back(r.get<double>());
    }
    return Response{200, Json{{"advantages", reward::group_advantages(rewards, cfg_.std_floor)}}};
  });
}

Response RewardHandler::health() const {
  return {200, Json{{"status", "ok"}, {"config_hash", hash_}, {"reward_config", records::to_json(cfg_)}}};
}

struct RewardServer::Impl {
  std::shared_ptr<const RewardHandler> handler;
  httplib::Server server;
};

RewardServer::RewardServer(std::shared_ptr<const RewardHandler> handler) : impl_(std::make_unique<Impl>()) {
  impl_->handler = std::move(handler);
  // SO_REUSEADDR only: with SO_REUSEPORT a second server could share the port.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  // Room for one keep-alive connection per trainer worker.
  impl_->server.new_task_queue = [] { return new httplib::ThreadPool(64); };
  impl_->server.set_keep_alive_max_count(1000);
  const RewardHandler* h = impl_->handler.get();
  auto reply = [h](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_header(kConfigHashHeader, h->config_hash());
    res.set_content(records::dump(r.body), "application/json");
  };
  impl_->server.Post("/v1/reward", [h, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, h->reward(req.body));
  });
  impl_->server.Post("/v1/reward/batch", [h, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, h->reward_batch(req.body));
  });
  impl_->server.Post("/v1/advantages", [h, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, h->advantages(req.body));
  });
  impl_->server.Get("/healthz", [h, reply](const httplib::Request&, httplib::Response& res) { reply(res, h->health()); });
}

RewardServer::~RewardServer() { stop(); }

int RewardServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound <= 0) throw ConfigError("cannot bind " + host + " on any port");
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void RewardServer::start() {
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void RewardServer::serve() { impl_->server.listen_after_bind(); }

void RewardServer::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace costforge::service
