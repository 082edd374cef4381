#pragma once

// Two-hop evaluation: a reasoner answers from the structured output alone, a
// judge scores that answer 0-100 against the gold answer, and scores are
// folded into Average Score (AS) and Perfect Rate (PR).

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "costforge/gateway.hpp"
#include "costforge/sample.hpp"
#include "costforge/sso.hpp"

namespace costforge::eval {

struct EvalRecord {
  std::string qa_id;
  std::optional<TaskCategory> task_category;
  std::string predicted_answer;
  int judge_score = 0;
  double latency_seconds = 0.0;

  bool operator==(const EvalRecord&) const = default;
};

struct ScoreSummary {
  double average_score = 0.0;  ///< AS, mean judge score
  double perfect_rate = 0.0;   ///< PR, share of scores equal to 100
  std::size_t n = 0;

  bool operator==(const ScoreSummary&) const = default;
};

struct EvalReport {
  ScoreSummary overall;
  /// Keyed by category name; records without a category go under "Uncategorized".
  std::map<std::string, ScoreSummary> per_category;
  double mean_latency_seconds = 0.0;
};

/// Asks the reasoner the question over the serialized SSO. No document text is
/// ever placed in the prompt. Returns the reply verbatim.
std::string two_hop_answer(const QASample& qa, const sso::StructuredOutput& sso, const llm::ModelHandle& reasoner);

/// Throws JudgeUnparseable or ScoreOutOfRange.
int judge_score(const QASample& qa, std::string_view predicted, const llm::ModelHandle& judge);

/// Two-hop answer plus judge score for one sample. latency_seconds is the
/// reasoner call's latency.
EvalRecord evaluate_sample(const QASample& qa, const sso::StructuredOutput& sso, const llm::ModelHandle& reasoner,
                           const llm::ModelHandle& judge);

/// Throws EmptyInput. Independent of input order.
EvalReport aggregate(std::vector<EvalRecord> records);

/// Wall-clock seconds taken by `run` on `clock`.
double measure_latency(llm::Clock& clock, const std::function<void()>& run);

struct LatencySummary {
  std::vector<double> per_sample;
  double mean = 0.0;
};

LatencySummary summarize_latency(std::vector<double> per_sample);

/// Fixed-width table: one row per category plus "Overall".
std::string format_report_table(const EvalReport& report);

}  // namespace costforge::eval
