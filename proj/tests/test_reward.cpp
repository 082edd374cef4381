#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <random>

#include "costforge/error.hpp"
#include "costforge/reward.hpp"
#include "costforge/text.hpp"
#include "support/helpers.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace costforge;
using namespace costforge::reward;
using sso::StructuredOutput;

namespace {

StructuredOutput table(std::vector<std::string> header, std::size_t rows) {
  sso::Table t{std::move(header), {}};
  for (std::size_t i = 0; i < rows; ++i) t.rows.emplace_back(t.header.size(), "v" + std::to_string(i));
  return StructuredOutput(std::move(t));
}

sso::CoSTTrace steps(int n) {
  std::string text;
  for (int i = 1; i <= n; ++i) text += "Step " + std::to_string(i) + ": body " + std::to_string(i) + "\n";
  return sso::parse_steps(text);
}

// Answers consistency checks from a list of verdicts, in call order.
std::shared_ptr<llm::ScriptedBackend> consistency_script(testing::World& w, const std::vector<std::string>& verdicts) {
  std::vector<llm::ScriptEntry> entries;
  for (const auto& v : verdicts) entries.push_back(testing::reply({testing::kConsistency}, v));
  return w.script(entries);
}

}  // namespace

TEST_CASE("format reward") {
  CHECK(format_reward("<reasoning>Step 1: a\nStep 2: b</reasoning><answer>| A |\n| 1 |</answer>") == 1.0);
  CHECK(format_reward("<reasoning>free text</reasoning><answer>x</answer>") == 0.5);
  CHECK(format_reward("hello <answer>x</answer>") == 0.0);
  CHECK(format_reward("<reasoning>Step 1: a\nStep 3: b</reasoning><answer>x</answer>") == 0.5);
  CHECK(format_reward("<reasoning> </reasoning><answer>x</answer>") == 0.0);
  CHECK(format_reward("<reasoning>Step 1: a</reasoning> trailing <answer>x</answer>") == 0.0);
  CHECK(format_reward("\n<reasoning>Step 1: a</reasoning>\n<answer>x</answer>\n") == 1.0);

  SUBCASE("totality over random texts") {
    std::mt19937_64 rng(3);
    const std::vector<std::string> pieces = {"<reasoning>", "</reasoning>", "<answer>", "</answer>", "Step 1: x\n",
                                             "Step 2: y\n", "free ",        " ",        "\n",        "| A |"};
    for (int i = 0; i < 2000; ++i) {
      std::string s;
      const int n = static_cast<int>(rng() % 9);
      for (int k = 0; k < n; ++k) s += pieces[rng() % pieces.size()];
      const double f = format_reward(s);
      CAPTURE(s);
      CHECK((f == 0.0 || f == 0.5 || f == 1.0));
    }
  }
}

TEST_CASE("structural score") {
  const auto ref = table({"Company", "Year", "Asset", "Revenue"}, 3);
  CHECK(structural_score(ref, ref) == 100.0);

  SUBCASE("three of four header columns, equal rows") {
    const auto pred = table({"Company", "Year", "Revenue"}, 3);
    const std::set<std::string> ph{"Company", "Year", "Revenue"};
    const std::set<std::string> rh{"Company", "Year", "Asset", "Revenue"};
    const double expected = 100.0 * (0.5 * oracle::f1(ph, rh) + 0.5 * 1.0);
    CHECK(structural_score(pred, ref) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(structural_score(pred, ref) == doctest::Approx(92.857).epsilon(1e-4));
  }
  SUBCASE("empty prediction") {
    const StructuredOutput empty(sso::Table{});
    CHECK(structural_score(empty, ref) == 0.0);
  }
  SUBCASE("row ratio") {
    CHECK(structural_score(table({"Company", "Year", "Asset", "Revenue"}, 1), ref) == doctest::Approx(50.0 + 50.0 / 3));
  }
  SUBCASE("kinds differ") {
    sso::Graph g;
    g.nodes = {"A"};
    CHECK(structural_score(StructuredOutput(g), ref) == 0.0);
  }
  SUBCASE("graphs") {
    sso::Graph r;
    r.nodes = {"A", "B", "C"};
    r.edges = {{"A", "owns", "B"}, {"B", "owns", "C"}};
    sso::Graph p;
    p.nodes = {"A", "B"};
    p.edges = {{"A", "owns", "B"}};
    const double nodes = oracle::f1(p.nodes, r.nodes);
    const double edges = oracle::f1(std::set<sso::Edge>(p.edges.begin(), p.edges.end()),
                                    std::set<sso::Edge>(r.edges.begin(), r.edges.end()));
    CHECK(structural_score(StructuredOutput(p), StructuredOutput(r)) ==
          doctest::Approx(100.0 * (0.5 * nodes + 0.5 * edges)).epsilon(1e-12));
  }
  SUBCASE("chunks") {
    sso::ChunkSet a, b;
    a.items = {{"x", {}}};
    b.items = {{"x", {}}, {"y", {}}, {"z", {}}, {"w", {}}};
    CHECK(structural_score(StructuredOutput(a), StructuredOutput(b)) == 25.0);
    sso::ChunkSet e;
    e.explicitly_empty = true;
    CHECK(structural_score(StructuredOutput(e), StructuredOutput(e)) == 100.0);
  }
  SUBCASE("range and symmetry over generated outputs") {
    gen::Rng rng(99);
    for (int i = 0; i < 300; ++i) {
      const auto a = gen::any(rng);
      const auto b = gen::any(rng);
      const double s = structural_score(a, b);
      CHECK(s >= 0.0);
      CHECK(s <= 100.0);
      CHECK(s == doctest::Approx(structural_score(b, a)).epsilon(1e-12));
      CHECK(structural_score(a, a) == 100.0);
    }
  }
}

TEST_CASE("semantic score") {
  testing::World w;
  w.script({testing::reply({testing::kSemantic}, "Looks right.\nScore: 85"),
            testing::reply({testing::kSemantic}, "Score: 120"),
            testing::reply({testing::kSemantic}, "no number")});
  CHECK(semantic_score("| A |", "| B |", w.handle()) == 85.0);
  CHECK_THROWS_AS(semantic_score("| A |", "| B |", w.handle()), ScoreOutOfRange);
  CHECK_THROWS_AS(semantic_score("| A |", "| B |", w.handle()), JudgeUnparseable);
  const auto before = w.gateway->calls_made();
  CHECK(semantic_score(" | A |\n", "| A |", w.handle()) == 100.0);
  CHECK(w.gateway->calls_made() == before);
}

TEST_CASE("answer reward") {
  CHECK(answer_reward(100, 100, 0.3, false) == 1.0);
  CHECK(answer_reward(50, 100, 0.3, false) == doctest::Approx(0.85).epsilon(1e-12));
  CHECK(answer_reward(100, 100, 0.3, true) == 0.0);
  CHECK_THROWS_AS(answer_reward(101, 0, 0.3, false), DomainError);
  CHECK_THROWS_AS(answer_reward(0, -1, 0.3, false), DomainError);
  CHECK_THROWS_AS(answer_reward(0, 0, 1.5, false), DomainError);
  CHECK_THROWS_AS(answer_reward(std::nan(""), 0, 0.3, false), DomainError);

  SUBCASE("oracle equivalence over random triples") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> score(0.0, 100.0), weight(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
      const double s = score(rng), m = score(rng), a = weight(rng);
      REQUIRE(std::abs(answer_reward(s, m, a, false) - oracle::answer_reward(s, m, a, false)) < 1e-12);
    }
  }
  SUBCASE("monotone in each score") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> score(0.0, 100.0), weight(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
      const double a = weight(rng);
      double lo = score(rng), hi = score(rng), other = score(rng);
      if (lo > hi) std::swap(lo, hi);
      CHECK(answer_reward(lo, other, a, false) <= answer_reward(hi, other, a, false));
      CHECK(answer_reward(other, lo, a, false) <= answer_reward(other, hi, a, false));
    }
  }
}

TEST_CASE("process reward") {
  SUBCASE("all consistent") {
    testing::World w;
    consistency_script(w, {"CONSISTENT", "CONSISTENT", "CONSISTENT", "CONSISTENT"});
    CHECK(process_reward(steps(4), steps(4), w.handle()).value == 1.0);
  }
  SUBCASE("three of four") {
    testing::World w;
    consistency_script(w, {"CONSISTENT", "INCONSISTENT", "CONSISTENT", "CONSISTENT"});
    auto p = process_reward(steps(4), steps(4), w.handle());
    CHECK(p.value == 0.75);
    CHECK_FALSE(p.steps[1].consistent);
    CHECK(p.audit_ids.size() == 4);
  }
  SUBCASE("missing predicted steps count as inconsistent") {
    testing::World w;
    auto backend = consistency_script(w, {"CONSISTENT", "CONSISTENT"});
    auto p = process_reward(steps(2), steps(4), w.handle());
    CHECK(p.value == 0.5);
    CHECK(p.steps[2].missing);
    CHECK(p.steps[3].missing);
    CHECK(backend->call_count() == 2);
  }
  SUBCASE("unparseable verdicts are flagged") {
    testing::World w;
    consistency_script(w, {"CONSISTENT", "hmm"});
    auto p = process_reward(steps(2), steps(2), w.handle());
    CHECK(p.value == 0.5);
    CHECK(p.steps[1].unparseable);
  }
  SUBCASE("empty reference") {
    testing::World w;
    CHECK_THROWS_AS(process_reward(steps(2), steps(0), w.handle()), DomainError);
  }
  SUBCASE("k of N exactly") {
    std::mt19937_64 rng(41);
    for (int n : {1, 2, 4, 8}) {
      for (int trial = 0; trial < 20; ++trial) {
        const int pred_n = static_cast<int>(rng() % (n + 2));
        std::vector<std::string> verdicts;
        int k = 0;
        for (int i = 0; i < std::min(pred_n, n); ++i) {
          const bool ok = rng() % 2;
          k += ok;
          verdicts.push_back(ok ? "CONSISTENT" : "INCONSISTENT");
        }
        testing::World w;
        if (!verdicts.empty()) consistency_script(w, verdicts);
        else w.script({testing::reply({"never"}, "x")});
        const double got = process_reward(steps(pred_n), steps(n), w.handle()).value;
        CHECK(got == static_cast<double>(k) / n);
        CHECK(got >= 0.0);
        CHECK(got <= 1.0);
      }
    }
  }
}

TEST_CASE("trajectory coefficient") {
  const RewardConfig cfg;
  CHECK(trajectory_coefficient(0.95, 1.0, 4, cfg) == 1.0);
  CHECK(trajectory_coefficient(0.95, 1.0, 20, cfg) == -1.0);
  CHECK(trajectory_coefficient(0.95, 0.0, 4, cfg) == 1.0);
  CHECK(trajectory_coefficient(0.5, 0.5, 4, cfg) == -1.0);
  CHECK(trajectory_coefficient(0.9, 0.5, 12, cfg) == 1.0);
  CHECK(trajectory_coefficient(0.9, 0.5, 13, cfg) == -1.0);
}

TEST_CASE("overall reward") {
  RewardParts a;
  a.format = 1.0;
  a.answer = 0.85;
  a.process_raw = 0.75;
  a.gamma = 1.0;
  const auto b = overall_reward(a);
  CHECK(b.total == doctest::Approx(2.60).epsilon(1e-12));
  CHECK(b.process_scaled == 0.75);

  RewardParts c;
  c.process_raw = 0.5;
  c.gamma = 1.0;
  CHECK(overall_reward(c).total == doctest::Approx(0.50).epsilon(1e-12));

  RewardParts z;
  z.gamma = 0.0;
  CHECK(overall_reward(z).total == 0.0);
}

TEST_CASE("group advantages") {
  auto near = [](const std::vector<double>& got, const std::vector<double>& want, double tol) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) < tol);
  };
  near(group_advantages(std::vector<double>{1, 1, 1}), {0, 0, 0}, 0.0 + 1e-300);
  near(group_advantages(std::vector<double>{0, 1}), {-1, 1}, 1e-12);
  near(group_advantages(std::vector<double>{1, 2, 3}), {-1.2247, 0, 1.2247}, 1e-4);
  CHECK_THROWS_AS(group_advantages(std::vector<double>{1}), GroupTooSmall);
  CHECK_THROWS_AS(group_advantages(std::vector<double>{}), GroupTooSmall);
  CHECK_THROWS_AS(group_advantages(std::vector<double>{1, INFINITY}), DomainError);

  SUBCASE("normalization property") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> size(2, 64);
    std::uniform_real_distribution<double> value(-5.0, 5.0);
    for (int g = 0; g < 1000; ++g) {
      std::vector<double> r(static_cast<std::size_t>(size(rng)));
      for (auto& x : r) x = value(rng);
      const auto a = group_advantages(r);
      const auto m = oracle::moments(a);
      REQUIRE(std::abs(static_cast<double>(m.mean)) < 1e-9);
      REQUIRE(std::abs(static_cast<double>(m.popstd) - 1.0) < 1e-9);
      const auto o = oracle::advantages(r, 1e-8);
      for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(std::abs(a[i] - o[i]) < 1e-9);
    }
  }
  SUBCASE("scale and shift invariance") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> value(-3.0, 3.0), scale(0.1, 10.0);
    for (int g = 0; g < 200; ++g) {
      std::vector<double> r(2 + rng() % 10);
      for (auto& x : r) x = value(rng);
      const double c = scale(rng), b = value(rng);
      std::vector<double> t;
      for (double x : r) t.push_back(c * x + b);
      const auto a1 = group_advantages(r);
      const auto a2 = group_advantages(t);
      for (std::size_t i = 0; i < r.size(); ++i) REQUIRE(std::abs(a1[i] - a2[i]) < 1e-9);
    }
  }
}

TEST_CASE("clipped surrogate") {
  RewardConfig cfg;
  cfg.beta = 0.0;
  CHECK(grpo_surrogate({{}, {1.0}, {0.0}}, std::vector<double>{1.0}, cfg) == 1.0);
  CHECK(clipped_objective_term(1.5, 1.0, 0.2) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(clipped_objective_term(0.5, -1.0, 0.2) == doctest::Approx(-0.8).epsilon(1e-15));

  SUBCASE("grid against the case-analysis oracle") {
    for (int ri = 1; ri <= 20; ++ri) {
      const double ratio = ri / 10.0;
      for (int a = -2; a <= 2; ++a) {
        const double term = clipped_objective_term(ratio, a, 0.2);
        const double clipped = std::clamp(ratio, 0.8, 1.2);
        CHECK(std::abs(term - oracle::clipped_term(ratio, a, 0.2)) < 1e-12);
        CHECK(term <= ratio * a + 1e-15);
        CHECK(term <= clipped * a + 1e-15);
        CHECK((term == ratio * a || term == clipped * a));
      }
    }
  }
  SUBCASE("KL penalty and averaging") {
    RewardConfig k;
    k.beta = 0.5;
    const GroupRollout g{{}, {1.0, 1.0}, {0.2, 0.4}};
    CHECK(grpo_surrogate(g, std::vector<double>{1.0, -1.0}, k) == doctest::Approx(-0.15).epsilon(1e-12));
  }
  SUBCASE("domain errors") {
    CHECK_THROWS_AS(grpo_surrogate({{}, {0.0}, {0.0}}, std::vector<double>{1.0}, cfg), DomainError);
    CHECK_THROWS_AS(grpo_surrogate({{}, {1.0, 1.0}, {0.0}}, std::vector<double>{1.0, 1.0}, cfg), DomainError);
    CHECK_THROWS_AS(grpo_surrogate({{}, {1.0}, {-0.1}}, std::vector<double>{1.0}, cfg), DomainError);
  }
}

TEST_CASE("config checks") {
  RewardConfig cfg;
  CHECK_NOTHROW(check_config(cfg));
  cfg.alpha = 1.2;
  CHECK_THROWS_AS(check_config(cfg), DomainError);
  cfg = {};
  cfg.gamma_incorrect = 0.5;
  CHECK_THROWS_AS(check_config(cfg), DomainError);
  cfg = {};
  cfg.std_floor = 0;
  CHECK_THROWS_AS(check_config(cfg), DomainError);
}

TEST_CASE("scoring a rollout") {
  const std::string reference =
      "<reasoning>Step 1: columns\nStep 2: rows\nStep 3: check</reasoning>"
      "<answer>| Company | Year |\n| A | 2020 |</answer>";
  RolloutInput in{"Which company?", "A", reference, "", sso::StructureKind::Table};

  SUBCASE("identical rollout") {
    testing::World w;
    w.script({testing::reply({testing::kConsistency}, "CONSISTENT", true)});
    in.rollout = reference;
    auto b = score_rollout(in, RewardConfig{}, w.handle());
    CHECK(b.format == 1.0);
    CHECK(b.s_struct == 100.0);
    CHECK(b.s_sem == 100.0);
    CHECK(b.answer == 1.0);
    CHECK(b.process_raw == 1.0);
    CHECK(b.gamma == 1.0);
    CHECK(b.total == 3.0);
    CHECK(b.step_count == 3);
    REQUIRE(b.audit_ids.size() == 4);
    CHECK(b.audit_ids[0] == "semantic_score:identity");
    CHECK(text::contains(b.audit_ids[1], "consistency_check:"));
  }
  SUBCASE("missing tags take the format-error branch") {
    testing::World w;
    auto backend = w.script({testing::reply({testing::kConsistency}, "CONSISTENT", true)});
    in.rollout = "Step 1: columns\nStep 2: rows";
    auto b = score_rollout(in, RewardConfig{}, w.handle());
    CHECK(b.format == 0.0);
    CHECK(b.answer_empty);
    CHECK(b.answer == 0.0);
    CHECK(b.gamma == 1.0);
    CHECK(b.process_raw == doctest::Approx(2.0 / 3.0));
    CHECK(b.total == doctest::Approx(2.0 / 3.0));
    CHECK(backend->call_count() == 2);
  }
  SUBCASE("wrong answer, judged semantically") {
    testing::World w;
    w.script({testing::reply({testing::kSemantic}, "Score: 40"),
              testing::reply({testing::kConsistency}, "CONSISTENT", true)});
    in.rollout = "<reasoning>Step 1: columns\nStep 2: rows\nStep 3: check</reasoning>"
                 "<answer>| Company | Year |\n| B | 2019 |</answer>";
    auto b = score_rollout(in, RewardConfig{}, w.handle());
    CHECK(b.s_struct == 100.0);
    CHECK(b.s_sem == 40.0);
    CHECK(b.answer == doctest::Approx(oracle::answer_reward(100, 40, 0.3, false)).epsilon(1e-12));
    CHECK(b.gamma == -1.0);
    CHECK(b.total == doctest::Approx(1.0 + 0.58 - 1.0).epsilon(1e-12));
  }
  SUBCASE("unparseable answer scores zero structurally") {
    testing::World w;
    w.script({testing::reply({testing::kSemantic}, "Score: 10"),
              testing::reply({testing::kConsistency}, "INCONSISTENT", true)});
    in.rollout = "<reasoning>Step 1: x</reasoning><answer>Company A</answer>";
    auto b = score_rollout(in, RewardConfig{}, w.handle());
    CHECK(b.s_struct == 0.0);
    CHECK(b.s_sem == 10.0);
  }
  SUBCASE("bad references") {
    testing::World w;
    w.script({testing::reply({}, "CONSISTENT", true)});
    in.rollout = reference;
    in.reference_target = "no tags";
    CHECK_THROWS_AS(score_rollout(in, RewardConfig{}, w.handle()), InvariantViolation);
    in.reference_target = "<reasoning>free</reasoning><answer>| A |</answer>";
    CHECK_THROWS_AS(score_rollout(in, RewardConfig{}, w.handle()), DomainError);
    in.reference_target = "<reasoning>Step 1: x</reasoning><answer>| A |\n| 1 | 2 |</answer>";
    CHECK_THROWS_AS(score_rollout(in, RewardConfig{}, w.handle()), InvariantViolation);
  }
  SUBCASE("deterministic audit ids") {
    testing::World w1, w2;
    for (auto* w : {&w1, &w2})
      w->script({testing::reply({testing::kSemantic}, "Score: 70", true),
                 testing::reply({testing::kConsistency}, "CONSISTENT", true)});
    in.rollout = "<reasoning>Step 1: a\nStep 2: b</reasoning><answer>| Company |\n| A |</answer>";
    CHECK(score_rollout(in, RewardConfig{}, w1.handle()) == score_rollout(in, RewardConfig{}, w2.handle()));
  }
}
