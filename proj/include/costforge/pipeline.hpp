#pragma once

// Data curation: structure selection and schema construction, trace
// generation, judge verification and iterative refinement. Every
// model call goes through llm::ModelHandle, so scripted backends make a run
// fully deterministic.

#include <atomic>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "costforge/gateway.hpp"
#include "costforge/sample.hpp"
#include "costforge/sso.hpp"

namespace costforge::pipeline {

struct VerificationVerdict {
  bool passed = false;
  std::string predicted_answer;
  std::string judge_raw;

  bool operator==(const VerificationVerdict&) const = default;
};

struct RefinementResult {
  sso::StructuredOutput final_sso;
  int iterations_used = 0;
  /// One entry per sufficiency check, in order.
  std::vector<bool> sufficiency_history;
  /// True iff the last sufficiency check said sufficient.
  bool converged = false;

  bool operator==(const RefinementResult&) const = default;
};

struct Provenance {
  /// stage -> backend tag
  std::map<std::string, std::string> backends;
  /// template id -> content hash
  std::map<std::string, std::string> templates;

  bool operator==(const Provenance&) const = default;
};

/// The final (trace, SSO) pair for one sample plus how it was obtained.
struct CuratedSample {
  QASample qa;
  sso::CoSTTrace trace;
  sso::StructuredOutput sso;
  sso::Schema schema;
  VerificationVerdict verdict;
  RefinementResult refinement;
  Provenance provenance;
  bool kept = false;

  bool operator==(const CuratedSample&) const = default;
};

struct SampleFailure {
  std::string sample_id;
  std::string stage;
  std::string error;
  std::string raw_text;

  bool operator==(const SampleFailure&) const = default;
};

using SampleOutcome = std::variant<CuratedSample, SampleFailure>;

struct Roles {
  llm::ModelHandle analyzer;   ///< structure and schema
  llm::ModelHandle generator;  ///< traces and refinement
  llm::ModelHandle reasoner;   ///< answers from the SSO during verification
  llm::ModelHandle judge;      ///< verdicts and the sufficiency check
};

struct PipelineConfig {
  int max_refine_iters = 3;
  /// Extra regeneration attempts per refinement round when the reply does not parse.
  int refine_parse_retries = 1;
  int workers = 1;
};

/// Throws UnparseableSelection when the reply names none of table/graph/chunk.
sso::StructureKind select_structure(std::string_view question, const llm::ModelHandle& model);

/// Parses a comma/line separated attribute list, keeping first occurrences.
/// Throws EmptySchema.
sso::Schema construct_schema(std::string_view question, sso::StructureKind kind, const llm::ModelHandle& model,
                             std::string question_id = {});

/// Text bound to the {{schema}} placeholder.
std::string render_schema(const sso::Schema& schema);

/// Throws GenerationRejected (keeping the raw reply) when the tags or the
/// structured output do not parse.
std::pair<sso::CoSTTrace, sso::StructuredOutput> generate_trace(const QASample& qa, const sso::Schema& schema,
                                                                const llm::ModelHandle& generator);

/// Throws JudgeUnparseable.
VerificationVerdict verify_quality(const QASample& qa, const sso::StructuredOutput& sso,
                                   const llm::ModelHandle& reasoner, const llm::ModelHandle& judge);

/// Sufficiency evaluator. Ambiguous replies count as insufficient.
bool is_sufficient(const QASample& qa, const sso::StructuredOutput& sso, const llm::ModelHandle& judge);

/// Fixed-point update: keep the SSO once the sufficiency check passes,
/// otherwise regenerate it from (question, documents, current SSO), for at
/// most `max_iters` regenerations.
RefinementResult refine(const QASample& qa, const sso::Schema& schema, const sso::StructuredOutput& current,
                        int max_iters, const llm::ModelHandle& generator, const llm::ModelHandle& judge,
                        int parse_retries = 1);

/// select -> schema -> trace -> verify, and on a failed verdict refinement
/// followed by re-verification.
/// Stage errors become a SampleFailure; `qa` is never modified.
SampleOutcome run_sample(const QASample& qa, const PipelineConfig& config, const Roles& roles);

/// Runs samples on config.workers threads; results are in input order. When
/// `cancel` becomes true, samples not yet started are left empty.
std::vector<std::optional<SampleOutcome>> run_batch(const std::vector<QASample>& samples,
                                                    const PipelineConfig& config, const Roles& roles,
                                                    const std::atomic<bool>* cancel = nullptr);

struct RenderedPrompt {
  std::string sample_id;
  llm::TemplateId template_id;
  std::string prompt;
};

/// The prompts a run would open with (selection, schema and trace), rendered with placeholder
/// text where an earlier stage's reply would go. Makes no backend call.
std::vector<RenderedPrompt> dry_run(const std::vector<QASample>& samples, const llm::TemplateStore& templates);

}  // namespace costforge::pipeline
