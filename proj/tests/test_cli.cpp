#include "doctest.h"

#include <chrono>
#include <iostream>
#include <sstream>
#include <thread>

#include "costforge/cli.hpp"
#include "costforge/dataset.hpp"
#include "costforge/records.hpp"
#include "costforge/text.hpp"
#include "httplib.h"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace costforge;
using records::Json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "costforge");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  Run r;
  r.code = cli::run_command(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path golden(const std::string& name) { return testing::fixtures_dir() / "golden" / name; }

std::vector<std::string> generate_args(const fs::path& out) {
  return {"generate", "--in", golden("qa.jsonl").string(), "--out", out.string(), "--config",
          golden("config.json").string(), "--backend", "mock:" + golden("script.json").string()};
}

}  // namespace

TEST_CASE("generate reproduces the golden output") {
  testing::TempDir dir;
  const std::string expected = testing::read_file(golden("curated.jsonl"));
  REQUIRE_FALSE(expected.empty());
  for (int i = 0; i < 3; ++i) {
    const auto out = dir / ("curated" + std::to_string(i) + ".jsonl");
    const Run r = run(generate_args(out));
    CHECK(r.code == cli::kExitOk);
    CHECK(testing::read_file(out) == expected);
    CHECK_FALSE(fs::exists(out.string() + ".failures"));
  }
}

TEST_CASE("golden output invariants") {
  const auto contents = records::read_jsonl(golden("curated.jsonl"));
  REQUIRE(contents.records.size() == 20);
  for (const auto& j : contents.records) {
    const auto c = records::curated_from_json(j);
    CAPTURE(c.qa.id);
    if (c.kept) CHECK(c.verdict.passed);
    CHECK(c.refinement.iterations_used <= 3);
    CHECK(c.refinement.final_sso == c.sso);
    if (c.refinement.converged) CHECK(c.refinement.sufficiency_history.back());
  }
}

TEST_CASE("generate reports partial failures") {
  testing::TempDir dir;
  // A script that answers nothing past structure selection.
  testing::write_file(dir / "script.json", R"([{"match": "most optimal structure", "response": "table", "repeat": true}])");
  const auto out = dir / "curated.jsonl";
  const Run r = run({"generate", "--in", golden("qa.jsonl").string(), "--out", out.string(), "--backend",
                     "mock:" + (dir / "script.json").string()});
  CHECK(r.code == cli::kExitPartialFailure);
  const auto failures = records::read_jsonl(out.string() + ".failures");
  CHECK(failures.records.size() == 20);
  CHECK(failures.records[0]["stage"] == "schema_construct");
  CHECK(testing::read_file(out).empty());
}

TEST_CASE("dry run makes no backend call") {
  const Run r = run({"generate", "--in", golden("qa.jsonl").string(), "--dry-run"});
  CHECK(r.code == cli::kExitOk);
  CHECK(text::contains(r.out, "=== q01 / structure_select ==="));
  CHECK(text::contains(r.out, "=== q20 / trace_generate ==="));
  CHECK(text::contains(r.out, testing::kTrace));
  CHECK(text::contains(r.out, "backend calls: 0"));
}

TEST_CASE("configuration errors exit with 2") {
  testing::TempDir dir;
  CHECK(run({"generate", "--in", golden("qa.jsonl").string(), "--out", (dir / "o.jsonl").string()}).code ==
        cli::kExitConfigError);
  CHECK(run({"generate", "--in", golden("qa.jsonl").string(), "--out", (dir / "o.jsonl").string(), "--backend",
             "bogus"})
            .code == cli::kExitConfigError);
  testing::write_file(dir / "bad.json", R"({"pipeline": {"workers": 0}})");
  CHECK(run({"generate", "--in", golden("qa.jsonl").string(), "--out", (dir / "o.jsonl").string(), "--config",
             (dir / "bad.json").string(), "--backend", "mock:" + golden("script.json").string()})
            .code == cli::kExitConfigError);
  CHECK(run({"no-such-command"}).code == cli::kExitConfigError);
  CHECK(run({"generate"}).code == cli::kExitConfigError);
  CHECK(run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("build-dataset") {
  testing::TempDir dir;
  const auto out = dir / "train.jsonl";
  const auto stats = dir / "stats.json";
  const Run r = run({"build-dataset", "--in", golden("curated.jsonl").string(), "--out", out.string(), "--stats",
                     stats.string()});
  CHECK(r.code == cli::kExitOk);
  const auto samples = dataset::read_records(out);
  CHECK(samples.size() == 20);

  // Expected counts straight from the curated fixture.
  std::map<std::string, std::size_t> kinds, cats;
  std::size_t kept = 0;
  for (const auto& j : records::read_jsonl(golden("curated.jsonl")).records) {
    ++kinds[j["structure_kind"].get<std::string>()];
    ++cats[j["qa"]["task_category"].is_null() ? "Uncategorized" : j["qa"]["task_category"].get<std::string>()];
    kept += j["kept"].get<bool>();
  }
  const Json s = Json::parse(testing::read_file(stats));
  CHECK(s["total"] == 20);
  CHECK(s["kept"] == kept);
  CHECK(s["kept_ratio"] == static_cast<double>(kept) / 20.0);
  for (const auto& [k, n] : kinds) CHECK(s["by_structure_kind"][k] == n);
  for (const auto& [c, n] : cats) CHECK(s["by_task_category"][c] == n);

  SUBCASE("a seeded shuffle is reproducible") {
    const auto a = dir / "a.jsonl";
    const auto b = dir / "b.jsonl";
    run({"build-dataset", "--in", golden("curated.jsonl").string(), "--out", a.string(), "--shuffle-seed", "9"});
    run({"build-dataset", "--in", golden("curated.jsonl").string(), "--out", b.string(), "--shuffle-seed", "9"});
    CHECK(testing::read_file(a) == testing::read_file(b));
    CHECK(testing::read_file(a) != testing::read_file(out));
  }
}

TEST_CASE("score a five-rollout group") {
  testing::TempDir dir;
  const auto out = dir / "scores.jsonl";
  const auto fixtures = testing::fixtures_dir() / "score";
  const Run r = run({"score", "--group", (fixtures / "rollouts.jsonl").string(), "--out", out.string(), "--backend",
                     "mock:" + (fixtures / "judge_script.json").string()});
  REQUIRE(r.code == cli::kExitOk);
  const auto lines = records::read_jsonl(out).records;
  REQUIRE(lines.size() == 1);
  const Json& g = lines[0];
  CHECK(g["group_id"] == "q01");
  REQUIRE(g["breakdowns"].size() == 5);
  REQUIRE(g["advantages"].size() == 5);

  // Component values worked out by hand from the fixture and judge script:
  // reference has 3 steps, 2 rows, header {Company, Revenue}; the judge calls
  // step 3 inconsistent and scores the semantic match 60, or 70 for the
  // answer with one altered value.
  const double third = 1.0 / 3.0;
  const std::vector<double> expected_totals = {
      1.0 + 1.0 + 2 * third,
      1.0 + oracle::answer_reward(75.0, 60.0, 0.3, false) - 2 * third,
      0.5 + oracle::answer_reward(100.0 * (0.5 * (2.0 / 3.0) + 0.25), 60.0, 0.3, false),
      0.0 + 0.0 + third,
      1.0 + oracle::answer_reward(100.0, 70.0, 0.3, false) - 2 * third,
  };
  std::vector<double> totals;
  for (std::size_t i = 0; i < 5; ++i) {
    CAPTURE(i);
    const double t = g["breakdowns"][i]["total"].get<double>();
    totals.push_back(t);
    CHECK(t == doctest::Approx(expected_totals[i]).epsilon(1e-12));
  }
  const auto adv = oracle::advantages(totals, 1e-8);
  for (std::size_t i = 0; i < 5; ++i) CHECK(g["advantages"][i].get<double>() == doctest::Approx(adv[i]).epsilon(1e-12));

  SUBCASE("per-rollout mode and determinism") {
    const auto flat = dir / "flat.jsonl";
    CHECK(run({"score", "--in", (fixtures / "rollouts.jsonl").string(), "--out", flat.string(), "--backend",
               "mock:" + (fixtures / "judge_script.json").string()})
              .code == cli::kExitOk);
    const auto rows = records::read_jsonl(flat).records;
    REQUIRE(rows.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(rows[i] == g["breakdowns"][i]);
  }
  SUBCASE("exactly one input") {
    CHECK(run({"score", "--backend", "mock:" + (fixtures / "judge_script.json").string()}).code ==
          cli::kExitConfigError);
  }
}

TEST_CASE("eval over curated records") {
  testing::TempDir dir;
  // The reasoner repeats the gold answer for even ids; the judge scores by answer.
  std::string script = "[";
  for (int i = 1; i <= 20; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "q%02d", i);
    script += std::string(i > 1 ? "," : "") + R"({"match": ["using only the structured data", "[)" + id +
              R"(]"], "response": ")" + (i % 2 == 0 ? "right" : "wrong") + R"("})";
  }
  script += R"(,{"match": ["Accuracy, Hallucinations", "Assistant's answer:\nright"], "response": "Score: 100", "repeat": true})";
  script += R"(,{"match": ["Accuracy, Hallucinations", "Assistant's answer:\nwrong"], "response": "Score: 40", "repeat": true}])";
  testing::write_file(dir / "judge.json", script);
  const auto report = dir / "report.json";
  const auto recs = dir / "records.jsonl";
  const Run r = run({"eval", "--in", golden("curated.jsonl").string(), "--out", report.string(), "--records",
                     recs.string(), "--backend", "mock:" + (dir / "judge.json").string()});
  REQUIRE(r.code == cli::kExitOk);
  const Json rep = Json::parse(testing::read_file(report));
  CHECK(rep["overall"]["n"] == 20);
  CHECK(rep["overall"]["average_score"] == 70.0);
  CHECK(rep["overall"]["perfect_rate"] == 0.5);
  CHECK(records::read_jsonl(recs).records.size() == 20);
  CHECK(text::contains(r.out, "Overall"));
}

TEST_CASE("latency on a simulated clock") {
  testing::TempDir dir;
  QASample qa;
  qa.question = "Which company?";
  qa.documents = {{"d1", "Acme Corp leads."}};
  qa.gold_answer = "Acme Corp";
  std::vector<Json> lines;
  for (const char* id : {"a", "b"}) {
    qa.id = id;
    qa.question = std::string("[") + id + "] Which company?";
    lines.push_back(records::to_json(qa));
  }
  records::write_jsonl(dir / "qa.jsonl", lines);
  const std::string trace = "<reasoning>Step 1: read d1</reasoning><answer>| Company |\\n| Acme Corp |</answer>";
  testing::write_file(dir / "s.json", std::string(R"([
    {"match": ["most optimal structure", "[a]"], "response": "table", "delay_seconds": 4},
    {"match": ["most optimal structure", "[b]"], "response": "table", "delay_seconds": 6},
    {"match": ["enumerate the task-specific"], "response": "Company", "repeat": true, "delay_seconds": 1},
    {"match": ["extract the structured data step by step"], "response": ")") + trace + R"(", "repeat": true, "delay_seconds": 3},
    {"match": ["using only the structured data"], "response": "Acme Corp", "repeat": true, "delay_seconds": 1},
    {"match": ["binary decision"], "response": "CORRECT", "repeat": true, "delay_seconds": 1}
  ])");
  const auto out = dir / "latency.json";
  const Run r = run({"latency", "--in", (dir / "qa.jsonl").string(), "--out", out.string(), "--fake-clock", "--backend",
                     "mock:" + (dir / "s.json").string()});
  REQUIRE(r.code == cli::kExitOk);
  const Json j = Json::parse(testing::read_file(out));
  CHECK(j["per_sample"][0]["seconds"].get<double>() == doctest::Approx(10.0));
  CHECK(j["per_sample"][1]["seconds"].get<double>() == doctest::Approx(12.0));
  CHECK(j["mean_seconds"].get<double>() == doctest::Approx(11.0));
  CHECK(j["n"] == 2);
}

TEST_CASE("reward-serve answers until interrupted") {
  testing::TempDir dir;
  const auto port_file = dir / "port";
  const auto script = testing::fixtures_dir() / "score" / "judge_script.json";
  int code = -1;
  std::thread server([&] {
    code = run({"reward-serve", "--port", "0", "--port-file", port_file.string(), "--backend",
                "mock:" + script.string()})
               .code;
  });
  int port = 0;
  for (int i = 0; i < 200 && port == 0; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    const std::string text = testing::read_file(port_file);
    if (!text.empty() && text.back() == '\n') port = std::stoi(text);
  }
  REQUIRE(port > 0);
  httplib::Client client("127.0.0.1", port);
  std::shared_ptr<httplib::Response> res;
  for (int i = 0; i < 100 && !res; ++i) {
    if (auto r = client.Post("/v1/advantages", R"({"rewards": [0, 1]})", "application/json"))
      res = std::make_shared<httplib::Response>(*r);
    else
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(Json::parse(res->body)["advantages"] == Json::array({-1.0, 1.0}));
  cli::cancel_flag().store(true);
  server.join();
  CHECK(code == cli::kExitOk);
}
