#include "costforge/pipeline.hpp"

#include <algorithm>
#include <cctype>

#include "costforge/error.hpp"
#include "costforge/eval.hpp"
#include "costforge/judging.hpp"
#include "costforge/parallel.hpp"
#include "costforge/text.hpp"

namespace costforge::pipeline {

using llm::TemplateId;

namespace {

std::string strip_list_decoration(std::string_view item) {
  std::string_view s = text::trim(item);
  while (!s.empty() && (s.front() == '-' || s.front() == '*')) s = text::trim(s.substr(1));
  while (s.size() >= 2 && (s.front() == '"' || s.front() == '\'' || s.front() == '`') && s.back() == s.front())
    s = text::trim(s.substr(1, s.size() - 2));
  return std::string(s);
}

// Parses tagged model output into (trace, SSO) or throws GenerationRejected.
std::pair<sso::CoSTTrace, sso::StructuredOutput> parse_generation(const std::string& raw, sso::StructureKind kind) {
  sso::TaggedOutput tagged;
  try {
    tagged = sso::extract_tagged_sections(raw);
  } catch (const MalformedTags& e) {
    throw GenerationRejected(std::string("MalformedTags: ") + e.what(), raw);
  }
  try {
    return {sso::parse_steps(tagged.reasoning), sso::parse_structured_output(tagged.answer, kind)};
  } catch (const KindMismatch& e) {
    throw GenerationRejected(std::string("KindMismatch: ") + e.what(), raw);
  } catch (const ParseError& e) {
    throw GenerationRejected(std::string("ParseError: ") + e.what(), raw);
  }
}

constexpr TemplateId kPipelineTemplates[] = {
    TemplateId::StructureSelect, TemplateId::SchemaConstruct,  TemplateId::TraceGenerate, TemplateId::TwoHopReason,
    TemplateId::Verify,          TemplateId::SufficiencyCheck, TemplateId::Refine,
};

Provenance make_provenance(const Roles& roles) {
  Provenance p;
  p.backends = {{"analysis", roles.analyzer.tag},
                {"generation", roles.generator.tag},
                {"reasoning", roles.reasoner.tag},
                {"judging", roles.judge.tag}};
  const llm::TemplateStore& store = roles.generator.gateway->templates();
  for (TemplateId id : kPipelineTemplates) p.templates[std::string(llm::template_name(id))] = store.get(id).version();
  return p;
}

}  // namespace

sso::StructureKind select_structure(std::string_view question, const llm::ModelHandle& model) {
  if (text::is_blank(question)) throw InvariantViolation("question is empty");
  const std::string reply = model.complete(TemplateId::StructureSelect, {{"question", std::string(question)}}).text;
  const std::string lower = text::to_lower(reply);
  // The earliest keyword wins, so "table (not graph)" selects a table.
  std::optional<std::pair<std::size_t, sso::StructureKind>> best;
  for (auto [word, kind] : {std::pair<std::string_view, sso::StructureKind>{"table", sso::StructureKind::Table},
                            {"graph", sso::StructureKind::Graph},
                            {"chunk", sso::StructureKind::Chunks}}) {
    std::size_t pos = lower.find(word);
    if (pos != std::string::npos && (!best || pos < best->first)) best = {pos, kind};
  }
  if (!best) throw UnparseableSelection("structure selection reply names no known structure: " + reply.substr(0, 200));
  return best->second;
}

sso::Schema construct_schema(std::string_view question, sso::StructureKind kind, const llm::ModelHandle& model,
                             std::string question_id) {
  const std::string reply =
      model
          .complete(TemplateId::SchemaConstruct,
                    {{"question", std::string(question)}, {"structure", std::string(sso::kind_name(kind))}})
          .text;
  sso::Schema schema;
  schema.kind = kind;
  schema.question_id = std::move(question_id);
  std::string item;
  auto flush = [&] {
    std::string name = strip_list_decoration(item);
    item.clear();
    if (name.empty()) return;
    if (std::find(schema.attributes.begin(), schema.attributes.end(), name) == schema.attributes.end())
      schema.attributes.push_back(std::move(name));
  };
  for (char c : reply) {
    if (c == ',' || c == '\n') {
      flush();
    } else {
      item.push_back(c);
    }
  }
  flush();
  if (schema.attributes.empty()) throw EmptySchema("schema construction returned no attributes");
  return schema;
}

std::string render_schema(const sso::Schema& schema) {
  return "Structure: " + std::string(sso::kind_name(schema.kind)) + "\nAttributes: " + text::join(schema.attributes, ", ");
}

std::pair<sso::CoSTTrace, sso::StructuredOutput> generate_trace(const QASample& qa, const sso::Schema& schema,
                                                                const llm::ModelHandle& generator) {
  sso::check_schema(schema);
  const std::string raw = generator
                              .complete(TemplateId::TraceGenerate, {{"question", qa.question},
                                                                    {"documents", render_documents(qa.documents)},
                                                                    {"schema", render_schema(schema)}})
                              .text;
  return parse_generation(raw, schema.kind);
}

VerificationVerdict verify_quality(const QASample& qa, const sso::StructuredOutput& sso,
                                   const llm::ModelHandle& reasoner, const llm::ModelHandle& judge) {
  VerificationVerdict verdict;
  verdict.predicted_answer = eval::two_hop_answer(qa, sso, reasoner);
  verdict.judge_raw = judge
                          .complete(TemplateId::Verify, {{"question", qa.question},
                                                         {"gold_answer", qa.gold_answer},
                                                         {"predicted_answer", verdict.predicted_answer}})
                          .text;
  const bool correct = judging::parse_binary(verdict.judge_raw, "CORRECT", "INCORRECT");
  verdict.passed = correct && !text::is_blank(verdict.predicted_answer);
  return verdict;
}

bool is_sufficient(const QASample& qa, const sso::StructuredOutput& sso, const llm::ModelHandle& judge) {
  const std::string reply = judge
                                .complete(TemplateId::SufficiencyCheck,
                                          {{"question", qa.question},
                                           {"structured_data", sso::serialize_structured_output(sso)}})
                                .text;
  try {
    return judging::parse_binary(reply, "SUFFICIENT", "INSUFFICIENT");
  } catch (const JudgeUnparseable&) {
    return false;
  }
}

RefinementResult refine(const QASample& qa, const sso::Schema& schema, const sso::StructuredOutput& current,
                        int max_iters, const llm::ModelHandle& generator, const llm::ModelHandle& judge,
                        int parse_retries) {
  if (max_iters < 0) throw DomainError("max_iters must be >= 0");
  RefinementResult result{current, 0, {}, false};
  while (result.iterations_used < max_iters) {
    const bool sufficient = is_sufficient(qa, result.final_sso, judge);
    result.sufficiency_history.push_back(sufficient);
    if (sufficient) {
      result.converged = true;
      return result;
    }
    const llm::Bindings bindings = {{"question", qa.question},
                                    {"documents", render_documents(qa.documents)},
                                    {"schema", render_schema(schema)},
                                    {"current_sso", sso::serialize_structured_output(result.final_sso)}};
    for (int attempt = 0;; ++attempt) {
      const std::string raw = generator.complete(TemplateId::Refine, bindings).text;
      try {
        result.final_sso = parse_generation(raw, result.final_sso.kind()).second;
        break;
      } catch (const GenerationRejected&) {
        if (attempt >= parse_retries) throw;
      }
    }
    ++result.iterations_used;
  }
  return result;
}

SampleOutcome run_sample(const QASample& qa, const PipelineConfig& config, const Roles& roles) {
  std::string stage = "input";
  try {
    check_sample(qa);
    stage = "structure_select";
    const sso::StructureKind kind = select_structure(qa.question, roles.analyzer);
    stage = "schema_construct";
    sso::Schema schema = construct_schema(qa.question, kind, roles.analyzer, qa.id);
    stage = "trace_generate";
    auto [trace, structured] = generate_trace(qa, schema, roles.generator);
    stage = "verify";
    VerificationVerdict verdict = verify_quality(qa, structured, roles.reasoner, roles.judge);
    RefinementResult refinement{structured, 0, {}, false};
    if (!verdict.passed && config.max_refine_iters > 0) {
      stage = "refine";
      refinement = refine(qa, schema, structured, config.max_refine_iters, roles.generator, roles.judge,
                          config.refine_parse_retries);
      stage = "reverify";
      verdict = verify_quality(qa, refinement.final_sso, roles.reasoner, roles.judge);
    }
    CuratedSample curated{qa,      std::move(trace), refinement.final_sso, std::move(schema),
                          verdict, refinement,       make_provenance(roles), verdict.passed};
    return curated;
  } catch (const GenerationRejected& e) {
    return SampleFailure{qa.id, stage, e.what(), e.raw_text()};
  } catch (const Error& e) {
    return SampleFailure{qa.id, stage, e.what(), {}};
  }
}

std::vector<std::optional<SampleOutcome>> run_batch(const std::vector<QASample>& samples,
                                                    const PipelineConfig& config, const Roles& roles,
                                                    const std::atomic<bool>* cancel) {
  std::vector<std::optional<SampleOutcome>> results(samples.size());
  parallel_for(samples.size(), config.workers, [&](std::size_t i) {
    if (cancel && cancel->load()) return;
    results[i] = run_sample(samples[i], config, roles);
  });
  return results;
}

std::vector<RenderedPrompt> dry_run(const std::vector<QASample>& samples, const llm::TemplateStore& templates) {
  std::vector<RenderedPrompt> prompts;
  for (const auto& qa : samples) {
    prompts.push_back({qa.id, TemplateId::StructureSelect,
                       templates.render(TemplateId::StructureSelect, {{"question", qa.question}})});
    prompts.push_back({qa.id, TemplateId::SchemaConstruct,
                       templates.render(TemplateId::SchemaConstruct,
                                        {{"question", qa.question}, {"structure", "<selected structure>"}})});
    prompts.push_back({qa.id, TemplateId::TraceGenerate,
                       templates.render(TemplateId::TraceGenerate, {{"question", qa.question},
                                                                    {"documents", render_documents(qa.documents)},
                                                                    {"schema", "<constructed schema>"}})});
  }
  return prompts;
}

}  // namespace costforge::pipeline
