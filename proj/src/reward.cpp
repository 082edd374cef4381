#include "costforge/reward.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "costforge/error.hpp"
#include "costforge/judging.hpp"
#include "costforge/text.hpp"

namespace costforge::reward {

namespace {

template <typename T>
double set_f1(const std::set<T>& pred, const std::set<T>& ref) {
  if (pred.empty() && ref.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& x : pred) common += ref.count(x);
  return 2.0 * static_cast<double>(common) / static_cast<double>(pred.size() + ref.size());
}

double count_ratio(std::size_t a, std::size_t b) {
  if (a == 0 && b == 0) return 1.0;
  return static_cast<double>(std::min(a, b)) / static_cast<double>(std::max(a, b));
}

void require_score_range(double v, const char* name) {
  if (!(v >= 0.0 && v <= 100.0)) throw DomainError(std::string(name) + " must be in [0, 100], got " + std::to_string(v));
}

std::string audit_id(llm::TemplateId id, const std::string& prompt) {
  return std::string(llm::template_name(id)) + ":" + text::hex64(text::fnv1a64(prompt)).substr(0, 12);
}

struct SemanticCall {
  double score;
  std::string audit_id;
};

SemanticCall semantic_call(std::string_view pred_answer, std::string_view ref_answer, const llm::ModelHandle& judge,
                           std::string_view question, std::string_view gold_answer) {
  if (text::trim(pred_answer) == text::trim(ref_answer)) return {100.0, "semantic_score:identity"};
  auto reply = judge.complete(llm::TemplateId::SemanticScore, {{"question", std::string(question)},
                                                               {"gold_answer", std::string(gold_answer)},
                                                               {"reference", std::string(ref_answer)},
                                                               {"predicted", std::string(pred_answer)}});
  return {static_cast<double>(judging::parse_score(reply.text)), audit_id(llm::TemplateId::SemanticScore, reply.prompt)};
}

}  // namespace

void check_config(const RewardConfig& cfg) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw DomainError(std::string("reward config: ") + what);
  };
  require(cfg.alpha >= 0 && cfg.alpha <= 1, "alpha must be in [0, 1]");
  require(cfg.epsilon > 0, "epsilon must be > 0");
  require(cfg.beta >= 0, "beta must be >= 0");
  require(cfg.gamma_correct > 0, "gamma_correct must be > 0");
  require(cfg.gamma_incorrect < 0, "gamma_incorrect must be < 0");
  require(std::isfinite(cfg.gamma_format_error), "gamma_format_error must be finite");
  require(cfg.correct_threshold >= 0 && cfg.correct_threshold <= 1, "correct_threshold must be in [0, 1]");
  require(cfg.overthink_step_cap >= 1, "overthink_step_cap must be >= 1");
  require(cfg.std_floor > 0, "std_floor must be > 0");
}

double format_reward(std::string_view raw_output) {
  sso::TaggedOutput tagged;
  try {
    tagged = sso::extract_tagged_sections(raw_output);
  } catch (const MalformedTags&) {
    return 0.0;
  }
  if (!text::is_blank(tagged.extraneous) || text::is_blank(tagged.reasoning)) return 0.0;
  return sso::parse_steps(tagged.reasoning).sequential_labels() ? 1.0 : 0.5;
}

double structural_score(const sso::StructuredOutput& pred, const sso::StructuredOutput& ref) {
  if (pred.kind() != ref.kind()) return 0.0;
  switch (pred.kind()) {
    case sso::StructureKind::Table: {
      const auto& p = pred.table();
      const auto& r = ref.table();
      const std::set<std::string> ph(p.header.begin(), p.header.end());
      const std::set<std::string> rh(r.header.begin(), r.header.end());
      return 100.0 * (0.5 * set_f1(ph, rh) + 0.5 * count_ratio(p.rows.size(), r.rows.size()));
    }
    case sso::StructureKind::Graph: {
      const auto& p = pred.graph();
      const auto& r = ref.graph();
      const std::set<sso::Edge> pe(p.edges.begin(), p.edges.end());
      const std::set<sso::Edge> re(r.edges.begin(), r.edges.end());
      return 100.0 * (0.5 * set_f1(p.nodes, r.nodes) + 0.5 * set_f1(pe, re));
    }
    case sso::StructureKind::Chunks:
      return 100.0 * count_ratio(pred.chunks().items.size(), ref.chunks().items.size());
  }
  return 0.0;
}

double semantic_score(std::string_view pred_answer, std::string_view ref_answer, const llm::ModelHandle& judge,
                      std::string_view question, std::string_view gold_answer) {
  return semantic_call(pred_answer, ref_answer, judge, question, gold_answer).score;
}

double answer_reward(double s_struct, double s_sem, double alpha, bool is_empty) {
  require_score_range(s_struct, "s_struct");
  require_score_range(s_sem, "s_sem");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must be in [0, 1]");
  if (is_empty) return 0.0;
  return (alpha * s_struct + (1.0 - alpha) * s_sem) / 100.0;
}

ProcessScore process_reward(const sso::CoSTTrace& pred, const sso::CoSTTrace& ref, const llm::ModelHandle& judge) {
  if (ref.steps.empty()) throw DomainError("reference trace has no steps");
  ProcessScore score;
  std::size_t consistent = 0;
  for (std::size_t i = 0; i < ref.steps.size(); ++i) {
    StepJudgement j;
    if (i >= pred.steps.size()) {
      j.missing = true;
      score.steps.push_back(j);
      continue;
    }
    auto reply = judge.complete(llm::TemplateId::ConsistencyCheck,
                                {{"reference_step", ref.steps[i].body}, {"predicted_step", pred.steps[i].body}});
    score.audit_ids.push_back(audit_id(llm::TemplateId::ConsistencyCheck, reply.prompt));
    try {
      j.consistent = judging::parse_binary(reply.text, "CONSISTENT", "INCONSISTENT");
    } catch (const JudgeUnparseable&) {
      j.unparseable = true;
    }
    consistent += j.consistent ? 1 : 0;
    score.steps.push_back(j);
  }
  score.value = static_cast<double>(consistent) / static_cast<double>(ref.steps.size());
  return score;
}

double trajectory_coefficient(double answer_reward, double format, int step_count, const RewardConfig& cfg) {
  if (format < 0.5) return cfg.gamma_format_error;
  if (answer_reward >= cfg.correct_threshold && step_count <= cfg.overthink_step_cap) return cfg.gamma_correct;
  return cfg.gamma_incorrect;
}

RewardBreakdown overall_reward(const RewardParts& parts) {
  RewardBreakdown b;
  b.format = parts.format;
  b.s_struct = parts.s_struct;
  b.s_sem = parts.s_sem;
  b.answer = parts.answer;
  b.answer_empty = parts.answer_empty;
  b.process_raw = parts.process_raw;
  b.gamma = parts.gamma;
  b.process_scaled = parts.process_raw * parts.gamma;
  b.total = parts.format + parts.answer + b.process_scaled;
  return b;
}

std::vector<double> group_advantages(std::span<const double> rewards, double std_floor) {
  if (rewards.size() < 2) throw GroupTooSmall("group needs at least 2 rewards, got " + std::to_string(rewards.size()));
  for (double r : rewards)
    if (!std::isfinite(r)) throw DomainError("rewards must be finite");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> adv(rewards.size(), 0.0);
  if (sd < std_floor) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

double clipped_objective_term(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

double grpo_surrogate(const GroupRollout& group, std::span<const double> advantages, const RewardConfig& cfg) {
  const std::size_t g = advantages.size();
  if (g == 0) throw DomainError("empty group");
  if (group.ratios.size() != g || group.kl.size() != g)
    throw DomainError("ratios, kl and advantages must have equal lengths");
  double sum = 0.0;
  for (std::size_t i = 0; i < g; ++i) {
    if (!(group.ratios[i] > 0)) throw DomainError("importance ratios must be > 0");
    if (!(group.kl[i] >= 0)) throw DomainError("kl values must be >= 0");
    sum += clipped_objective_term(group.ratios[i], advantages[i], cfg.epsilon) - cfg.beta * group.kl[i];
  }
  return sum / static_cast<double>(g);
}

RewardBreakdown score_rollout(const RolloutInput& input, const RewardConfig& cfg, const llm::ModelHandle& judge) {
  sso::TaggedOutput reference;
  try {
    reference = sso::extract_tagged_sections(input.reference_target);
  } catch (const MalformedTags& e) {
    throw InvariantViolation(std::string("reference target: ") + e.what());
  }
  const sso::CoSTTrace ref_trace = sso::parse_steps(reference.reasoning);
  if (ref_trace.steps.empty()) throw DomainError("reference target reasoning has no step labels");
  std::optional<sso::StructuredOutput> ref_sso;
  try {
    ref_sso = sso::parse_structured_output(reference.answer, input.kind);
  } catch (const Error& e) {
    throw InvariantViolation(std::string("reference answer: ") + e.what());
  }

  RewardParts parts;
  parts.format = format_reward(input.rollout);

  // A rollout with broken tags is still scored step by step over its whole
  // text; it simply has no answer section.
  std::string reasoning = input.rollout;
  std::string answer_text;
  try {
    sso::TaggedOutput tagged = sso::extract_tagged_sections(input.rollout);
    reasoning = std::move(tagged.reasoning);
    answer_text = std::move(tagged.answer);
  } catch (const MalformedTags&) {
  }

  std::vector<std::string> audit;
  parts.answer_empty = text::is_blank(answer_text);
  if (!parts.answer_empty) {
    try {
      parts.s_struct = structural_score(sso::parse_structured_output(answer_text, input.kind), *ref_sso);
    } catch (const ParseError&) {
      parts.s_struct = 0.0;
    } catch (const KindMismatch&) {
      parts.s_struct = 0.0;
    }
    SemanticCall sem = semantic_call(answer_text, reference.answer, judge, input.question, input.gold_answer);
    parts.s_sem = sem.score;
    audit.push_back(sem.audit_id);
  }
  parts.answer = answer_reward(parts.s_struct, parts.s_sem, cfg.alpha, parts.answer_empty);

  const sso::CoSTTrace pred_trace = sso::parse_steps(reasoning);
  ProcessScore process = process_reward(pred_trace, ref_trace, judge);
  parts.process_raw = process.value;
  const int step_count = static_cast<int>(pred_trace.steps.size());
  parts.gamma = trajectory_coefficient(parts.answer, parts.format, step_count, cfg);

  RewardBreakdown b = overall_reward(parts);
  b.step_count = step_count;
  b.steps = std::move(process.steps);
  audit.insert(audit.end(), process.audit_ids.begin(), process.audit_ids.end());
  b.audit_ids = std::move(audit);
  return b;
}

}  // namespace costforge::reward
