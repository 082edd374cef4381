#pragma once

// GRPO reward stack: format compliance, answer correctness (structural +
// semantic), step-level process consistency scaled by a trajectory
// coefficient, group-relative advantages and the clipped surrogate value.
//
// Everything except semantic_score/process_reward/score_rollout is pure.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "costforge/gateway.hpp"
#include "costforge/sso.hpp"

namespace costforge::reward {

struct RewardConfig {
  double alpha = 0.3;      ///< weight of the structural score in the answer reward
  double epsilon = 0.2;    ///< clip radius
  double beta = 0.04;      ///< KL coefficient
  double gamma_correct = 1.0;
  double gamma_incorrect = -1.0;
  double gamma_format_error = 1.0;
  double correct_threshold = 0.9;  ///< answer reward at or above this counts as correct
  int overthink_step_cap = 12;     ///< more steps than this is an overthought trajectory
  double std_floor = 1e-8;         ///< groups with a smaller std get zero advantages

  bool operator==(const RewardConfig&) const = default;
};

/// Throws DomainError when a field is outside its documented range.
void check_config(const RewardConfig& cfg);

/// 0 for malformed/duplicated tags, extraneous top-level text or an empty
/// reasoning section; 0.5 for one clean reasoning + answer pair; 1.0 when the
/// reasoning also carries step labels numbered 1..N.
double format_reward(std::string_view raw_output);

/// Rule-based structural agreement in [0, 100]; 0 across kinds.
///   table:  0.5 * F1(header sets) + 0.5 * min(rows) / max(rows)
///   graph:  0.5 * F1(node sets)   + 0.5 * F1(edge triples)
///   chunks: min(count) / max(count)
double structural_score(const sso::StructuredOutput& pred, const sso::StructuredOutput& ref);

/// Judge-rated semantic similarity in [0, 100]. Identical texts (after
/// trimming) score 100 without a call. `question`/`gold_answer` give the judge
/// context. Throws JudgeUnparseable or ScoreOutOfRange.
double semantic_score(std::string_view pred_answer, std::string_view ref_answer, const llm::ModelHandle& judge,
                      std::string_view question = {}, std::string_view gold_answer = {});

/// (alpha * s_struct + (1 - alpha) * s_sem) / 100, or 0 for an empty answer.
/// Throws DomainError for inputs outside [0, 100] / alpha outside [0, 1].
double answer_reward(double s_struct, double s_sem, double alpha, bool is_empty);

struct StepJudgement {
  bool consistent = false;
  bool missing = false;      ///< the prediction has no step at this position
  bool unparseable = false;  ///< the judge reply was neither verdict

  bool operator==(const StepJudgement&) const = default;
};

struct ProcessScore {
  double value = 0.0;
  std::vector<StepJudgement> steps;
  std::vector<std::string> audit_ids;
};

/// Mean over reference steps of the judge's per-step consistency verdict.
/// Steps are paired by position; a missing predicted step or an unparseable
/// verdict counts as inconsistent. Throws DomainError when `ref` has no steps.
ProcessScore process_reward(const sso::CoSTTrace& pred, const sso::CoSTTrace& ref, const llm::ModelHandle& judge);

double trajectory_coefficient(double answer_reward, double format, int step_count, const RewardConfig& cfg);

struct RewardParts {
  double format = 0.0;
  double s_struct = 0.0;
  double s_sem = 0.0;
  double answer = 0.0;
  bool answer_empty = false;
  double process_raw = 0.0;
  double gamma = 1.0;
};

struct RewardBreakdown {
  double format = 0.0;
  double s_struct = 0.0;
  double s_sem = 0.0;
  double answer = 0.0;
  bool answer_empty = false;
  double process_raw = 0.0;
  double gamma = 1.0;
  double process_scaled = 0.0;
  double total = 0.0;
  int step_count = 0;
  std::vector<StepJudgement> steps;
  std::vector<std::string> audit_ids;

  bool operator==(const RewardBreakdown&) const = default;
};

/// total = format + answer + process_raw * gamma.
RewardBreakdown overall_reward(const RewardParts& parts);

/// (r_i - mean) / population std. Returns zeros when std < std_floor.
/// Throws GroupTooSmall for fewer than two rewards.
std::vector<double> group_advantages(std::span<const double> rewards, double std_floor = 1e-8);

struct GroupRollout {
  std::vector<double> rewards;
  std::vector<double> ratios;  ///< importance ratios pi_theta / pi_old, > 0
  std::vector<double> kl;      ///< per-output KL estimates, >= 0
};

/// (1/G) * sum_i [min(ratio_i * A_i, clip(ratio_i, 1-eps, 1+eps) * A_i) - beta * kl_i].
/// Throws DomainError on non-positive ratios or mismatched lengths.
double grpo_surrogate(const GroupRollout& group, std::span<const double> advantages, const RewardConfig& cfg);

/// One summand of grpo_surrogate without the KL term.
double clipped_objective_term(double ratio, double advantage, double epsilon);

// --- full rollout scoring -------------------------------------------------------

struct RolloutInput {
  std::string question;
  std::string gold_answer;
  std::string reference_target;  ///< tagged (trace, SSO) reference
  std::string rollout;           ///< raw model output
  sso::StructureKind kind = sso::StructureKind::Table;
};

/// Scores one rollout against its reference target. Throws InvariantViolation
/// when the reference target is malformed, and DomainError when it has no
/// steps; judge failures propagate.
RewardBreakdown score_rollout(const RolloutInput& input, const RewardConfig& cfg, const llm::ModelHandle& judge);

}  // namespace costforge::reward
