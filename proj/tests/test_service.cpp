#include "doctest.h"

#include <random>
#include <thread>

#include "costforge/error.hpp"
#include "costforge/reward_service.hpp"
#include "httplib.h"
#include "support/helpers.hpp"
#include "support/judge.hpp"

using namespace costforge;
using namespace costforge::service;
using records::Json;

namespace {

const std::string kReference =
    "<reasoning>Step 1: columns\nStep 2: rows</reasoning><answer>| Company | Year |\n| Acme | 2015 |</answer>";

Json request(const std::string& rollout) {
  return Json{{"question", "Which company?"},
              {"gold_answer", "Acme"},
              {"reference_target", kReference},
              {"rollout", rollout},
              {"structure_kind", "table"},
              {"version", "1"}};
}

struct Fixture {
  testing::World world;
  std::shared_ptr<RewardHandler> handler;

  Fixture() {
    world.callback(testing::hashed_verdict);
    handler = std::make_shared<RewardHandler>(reward::RewardConfig{}, world.handle());
  }
};

}  // namespace

TEST_CASE("advantages endpoint") {
  Fixture f;
  auto r = f.handler->advantages(R"({"rewards": [0, 1]})");
  CHECK(r.status == 200);
  CHECK(r.body["advantages"] == Json::array({-1.0, 1.0}));
  CHECK(f.handler->advantages(R"({"rewards": [5, 5, 5]})").body["advantages"] == Json::array({0.0, 0.0, 0.0}));

  auto empty = f.handler->advantages(R"({"rewards": []})");
  CHECK(empty.status == 422);
  CHECK(empty.body["error"] == "GroupTooSmall");
  CHECK(f.handler->advantages(R"({"rewards": [1, "x"]})").status == 400);
  CHECK(f.handler->advantages("not json").status == 400);
  CHECK(f.handler->advantages(R"({"values": [1, 2]})").status == 400);
}

TEST_CASE("reward endpoint") {
  Fixture f;
  SUBCASE("missing tags still score, on the format-error branch") {
    auto r = f.handler->reward(records::dump(request("Step 1: columns\nStep 2: rows")));
    CHECK(r.status == 200);
    CHECK(r.body["format"] == 0.0);
    CHECK(r.body["gamma"] == 1.0);
    CHECK(r.body["answer_empty"] == true);
    CHECK(r.body["version"] == "1");
  }
  SUBCASE("matches in-process scoring") {
    const auto req = request("<reasoning>Step 1: a\nStep 2: b</reasoning><answer>| Company |\n| Acme |</answer>");
    auto r = f.handler->reward(records::dump(req));
    REQUIRE(r.status == 200);
    const auto direct =
        reward::score_rollout(records::reward_request_from_json(req).input, reward::RewardConfig{}, f.world.handle());
    CHECK(records::dump(r.body) == records::dump(records::to_json(direct)));
  }
  SUBCASE("status codes") {
    CHECK(f.handler->reward("{").status == 400);
    Json missing = request("x");
    missing.erase("rollout");
    CHECK(f.handler->reward(records::dump(missing)).status == 400);
    Json wrong_version = request("x");
    wrong_version["version"] = "9";
    CHECK(f.handler->reward(records::dump(wrong_version)).status == 400);
    Json bad_ref = request("x");
    bad_ref["reference_target"] = "no tags";
    auto r = f.handler->reward(records::dump(bad_ref));
    CHECK(r.status == 422);
    CHECK(r.body["error"] == "InvariantViolation");
  }
  SUBCASE("an unusable judge is a 503") {
    testing::World w;
    w.script({testing::reply({testing::kConsistency}, "no verdict", true),
              testing::reply({testing::kSemantic}, "no score", true)});
    RewardHandler h(reward::RewardConfig{}, w.handle());
    auto r = h.reward(records::dump(request("<reasoning>Step 1: a</reasoning><answer>| Company |\n| B |</answer>")));
    CHECK(r.status == 503);
    CHECK(r.body["error"] == "JudgeUnparseable");
  }
  SUBCASE("batches are all or nothing") {
    Json batch{{"requests", Json::array({request("Step 1: a"), request("Step 1: b")})}};
    auto ok = f.handler->reward_batch(records::dump(batch));
    CHECK(ok.status == 200);
    CHECK(ok.body["breakdowns"].size() == 2);
    batch["requests"].push_back(Json{{"question", "incomplete"}});
    CHECK(f.handler->reward_batch(records::dump(batch)).status == 400);
    CHECK(f.handler->reward_batch(R"({"requests": 3})").status == 400);
  }
  SUBCASE("health reports the config") {
    auto h = f.handler->health();
    CHECK(h.status == 200);
    CHECK(h.body["config_hash"] == f.handler->config_hash());
    CHECK(h.body["reward_config"]["alpha"] == 0.3);
  }
}

TEST_CASE("HTTP round trip") {
  Fixture f;
  RewardServer server(f.handler);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  server.start();

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(health->get_header_value(kConfigHashHeader) == f.handler->config_hash());

  std::mt19937_64 rng(77);
  for (int i = 0; i < 20; ++i) {
    const std::string body = records::dump(records::to_json(testing::random_request(rng, i)));
    auto res = client.Post("/v1/reward", body, "application/json");
    REQUIRE(res);
    const Response local = f.handler->reward(body);
    CHECK(res->status == local.status);
    CHECK(res->body == records::dump(local.body));
    CHECK(res->get_header_value(kConfigHashHeader) == f.handler->config_hash());
  }

  auto adv = client.Post("/v1/advantages", R"({"rewards": []})", "application/json");
  REQUIRE(adv);
  CHECK(adv->status == 422);
  CHECK(adv->get_header_value(kConfigHashHeader) == f.handler->config_hash());

  auto unknown = client.Get("/v1/nothing");
  REQUIRE(unknown);
  CHECK(unknown->status == 404);
  server.stop();
}

TEST_CASE("parallel clients see identical results") {
  Fixture f;
  RewardServer server(f.handler);
  const int port = server.bind("127.0.0.1", 0);
  server.start();

  std::mt19937_64 rng(5);
  std::vector<std::string> bodies;
  std::vector<std::string> expected;
  for (int i = 0; i < 10; ++i) {
    bodies.push_back(records::dump(records::to_json(testing::random_request(rng, i))));
    expected.push_back(records::dump(f.handler->reward(bodies.back()).body));
  }
  std::vector<std::vector<std::string>> seen(16);
  std::vector<std::thread> clients;
  for (int c = 0; c < 16; ++c) {
    clients.emplace_back([&, c] {
      httplib::Client client("127.0.0.1", port);
      for (const auto& b : bodies) {
        auto res = client.Post("/v1/reward", b, "application/json");
        seen[c].push_back(res ? res->body : std::string("<no response>"));
      }
    });
  }
  for (auto& t : clients) t.join();
  for (const auto& s : seen) CHECK(s == expected);
  server.stop();
}

TEST_CASE("binding a taken port fails") {
  Fixture f;
  RewardServer a(f.handler);
  const int port = a.bind("127.0.0.1", 0);
  RewardServer b(f.handler);
  CHECK_THROWS_AS(b.bind("127.0.0.1", port), ConfigError);
}
