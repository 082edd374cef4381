#include "costforge/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <tuple>
#include <sstream>

#include "costforge/error.hpp"
#include "costforge/judging.hpp"

namespace costforge::eval {

std::string two_hop_answer(const QASample& qa, const sso::StructuredOutput& sso, const llm::ModelHandle& reasoner) {
  const std::string data = sso::serialize_structured_output(sso);
  return reasoner.complete(llm::TemplateId::TwoHopReason, {{"question", qa.question}, {"structured_data", data}})
      .text;
}

int judge_score(const QASample& qa, std::string_view predicted, const llm::ModelHandle& judge) {
  auto reply = judge.complete(llm::TemplateId::JudgeScore, {{"question", qa.question},
                                                            {"gold_answer", qa.gold_answer},
                                                            {"predicted_answer", std::string(predicted)}});
  return judging::parse_score(reply.text);
}

EvalRecord evaluate_sample(const QASample& qa, const sso::StructuredOutput& sso, const llm::ModelHandle& reasoner,
                           const llm::ModelHandle& judge) {
  const std::string data = sso::serialize_structured_output(sso);
  auto answer = reasoner.complete(llm::TemplateId::TwoHopReason, {{"question", qa.question}, {"structured_data", data}});
  EvalRecord record;
  record.qa_id = qa.id;
  record.task_category = qa.task_category;
  record.predicted_answer = answer.text;
  record.judge_score = judge_score(qa, answer.text, judge);
  record.latency_seconds = answer.latency_seconds;
  return record;
}

namespace {

struct Tally {
  long long score_sum = 0;
  std::size_t perfect = 0;
  std::size_t n = 0;

  void add(int score) {
    score_sum += score;
    perfect += score == 100 ? 1 : 0;
    ++n;
  }

  ScoreSummary summary() const {
    return {static_cast<double>(score_sum) / static_cast<double>(n),
            static_cast<double>(perfect) / static_cast<double>(n), n};
  }
};

}  // namespace

EvalReport aggregate(std::vector<EvalRecord> records) {
  if (records.empty()) throw EmptyInput("no evaluation records to aggregate");
  // A fixed order keeps the floating-point latency sum reproducible.
  std::sort(records.begin(), records.end(), [](const EvalRecord& a, const EvalRecord& b) {
    return std::tie(a.qa_id, a.judge_score, a.latency_seconds) < std::tie(b.qa_id, b.judge_score, b.latency_seconds);
  });
  Tally overall;
  std::map<std::string, Tally> by_category;
  double latency_sum = 0.0;
  for (const auto& r : records) {
    if (r.judge_score < 0 || r.judge_score > 100)
      throw ScoreOutOfRange("record " + r.qa_id + " has judge score " + std::to_string(r.judge_score));
    overall.add(r.judge_score);
    const std::string key = r.task_category ? std::string(category_name(*r.task_category)) : "Uncategorized";
    by_category[key].add(r.judge_score);
    latency_sum += r.latency_seconds;
  }
  EvalReport report;
  report.overall = overall.summary();
  for (const auto& [name, tally] : by_category) report.per_category.emplace(name, tally.summary());
  report.mean_latency_seconds = latency_sum / static_cast<double>(records.size());
  return report;
}

double measure_latency(llm::Clock& clock, const std::function<void()>& run) {
  const double start = clock.now();
  run();
  return std::max(0.0, clock.now() - start);
}

LatencySummary summarize_latency(std::vector<double> per_sample) {
  LatencySummary summary;
  if (!per_sample.empty())
    summary.mean = std::accumulate(per_sample.begin(), per_sample.end(), 0.0) / static_cast<double>(per_sample.size());
  summary.per_sample = std::move(per_sample);
  return summary;
}

std::string format_report_table(const EvalReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(20) << "Category" << std::right << std::setw(8) << "N" << std::setw(10) << "AS"
      << std::setw(8) << "PR" << '\n';
  auto row = [&](const std::string& name, const ScoreSummary& s) {
    out << std::left << std::setw(20) << name << std::right << std::setw(8) << s.n << std::setw(10) << std::fixed
        << std::setprecision(2) << s.average_score << std::setw(8) << std::setprecision(2) << s.perfect_rate << '\n';
  };
  for (const auto& [name, s] : report.per_category) row(name, s);
  row("Overall", report.overall);
  out << "Mean latency: " << std::fixed << std::setprecision(3) << report.mean_latency_seconds << "s\n";
  return out.str();
}

}  // namespace costforge::eval
