#include "costforge/records.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "costforge/error.hpp"
#include "costforge/text.hpp"

namespace costforge::records {

namespace {

const Json& field(const Json& j, const char* name) {
  if (!j.is_object()) throw InvariantViolation("record is not a JSON object");
  auto it = j.find(name);
  if (it == j.end()) throw InvariantViolation(std::string("missing field '") + name + "'");
  return *it;
}

std::string str(const Json& j, const char* name) {
  const Json& v = field(j, name);
  if (!v.is_string()) throw InvariantViolation(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

std::string str_or(const Json& j, const char* name, std::string fallback) {
  if (!j.contains(name) || j[name].is_null()) return fallback;
  return str(j, name);
}

bool boolean(const Json& j, const char* name) {
  const Json& v = field(j, name);
  if (!v.is_boolean()) throw InvariantViolation(std::string("field '") + name + "' must be a boolean");
  return v.get<bool>();
}

double number(const Json& j, const char* name) {
  const Json& v = field(j, name);
  if (!v.is_number()) throw InvariantViolation(std::string("field '") + name + "' must be a number");
  return v.get<double>();
}

int integer(const Json& j, const char* name) {
  const Json& v = field(j, name);
  if (!v.is_number_integer()) throw InvariantViolation(std::string("field '") + name + "' must be an integer");
  return v.get<int>();
}

Json category_json(const std::optional<TaskCategory>& c) {
  return c ? Json(std::string(category_name(*c))) : Json(nullptr);
}

std::optional<TaskCategory> category_from(const Json& j, const char* name) {
  if (!j.contains(name) || j[name].is_null()) return std::nullopt;
  return parse_category(str(j, name));
}

Json string_map(const std::map<std::string, std::string>& m) {
  Json out = Json::object();
  for (const auto& [k, v] : m) out[k] = v;
  return out;
}

std::map<std::string, std::string> string_map_from(const Json& j) {
  if (!j.is_object()) throw InvariantViolation("expected an object of strings");
  std::map<std::string, std::string> m;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw InvariantViolation("expected an object of strings");
    m[k] = v.get<std::string>();
  }
  return m;
}

}  // namespace

void check_version(const Json& j, bool required) {
  if (!j.is_object()) throw InvariantViolation("record is not a JSON object");
  auto it = j.find("version");
  if (it == j.end()) {
    if (required) throw SchemaVersionMismatch("record has no version field, expected \"1\"");
    return;
  }
  if (!it->is_string() || it->get<std::string>() != kFormatVersion)
    throw SchemaVersionMismatch("record version " + it->dump() + " is not supported, expected \"1\"");
}

std::string error_at(const std::filesystem::path& path, std::size_t line, const std::string& message) {
  return path.string() + ": line " + std::to_string(line) + ": " + message;
}

// --- QASample ---------------------------------------------------------------------

Json to_json(const QASample& qa) {
  Json docs = Json::array();
  for (const auto& d : qa.documents) docs.push_back(Json{{"id", d.id}, {"text", d.text}});
  return Json{{"id", qa.id},
              {"question", qa.question},
              {"documents", std::move(docs)},
              {"gold_answer", qa.gold_answer},
              {"task_category", category_json(qa.task_category)},
              {"domain_tag", qa.domain_tag},
              {"version", kFormatVersion}};
}

QASample qa_from_json(const Json& j) {
  check_version(j, false);
  QASample qa;
  qa.id = str(j, "id");
  qa.question = str(j, "question");
  const Json& docs = field(j, "documents");
  if (!docs.is_array()) throw InvariantViolation("field 'documents' must be an array");
  for (const auto& d : docs) qa.documents.push_back({str(d, "id"), str(d, "text")});
  qa.gold_answer = str(j, "gold_answer");
  qa.task_category = category_from(j, "task_category");
  qa.domain_tag = str_or(j, "domain_tag", "");
  return qa;
}

// --- curated samples --------------------------------------------------------------

Json to_json(const pipeline::CuratedSample& c) {
  if (!(c.refinement.final_sso == c.sso))
    throw InvariantViolation("sample " + c.qa.id + ": refinement result differs from the curated SSO");
  Json history = Json::array();
  for (bool b : c.refinement.sufficiency_history) history.push_back(b);
  return Json{{"id", c.qa.id},
              {"qa", to_json(c.qa)},
              {"structure_kind", std::string(sso::kind_name(c.sso.kind()))},
              {"schema", Json{{"attributes", c.schema.attributes}}},
              {"trace", c.trace.raw_text},
              {"sso", sso::serialize_structured_output(c.sso)},
              {"verdict", Json{{"passed", c.verdict.passed},
                               {"predicted_answer", c.verdict.predicted_answer},
                               {"judge_raw", c.verdict.judge_raw}}},
              {"refinement", Json{{"iterations_used", c.refinement.iterations_used},
                                  {"sufficiency_history", std::move(history)},
                                  {"converged", c.refinement.converged}}},
              {"provenance", Json{{"backends", string_map(c.provenance.backends)},
                                  {"templates", string_map(c.provenance.templates)}}},
              {"kept", c.kept},
              {"version", kFormatVersion}};
}

pipeline::CuratedSample curated_from_json(const Json& j) {
  check_version(j);
  const sso::StructureKind kind = sso::parse_kind(str(j, "structure_kind"));
  sso::StructuredOutput structured = sso::parse_structured_output(str(j, "sso"), kind);

  sso::Schema schema;
  schema.kind = kind;
  const Json& attrs = field(field(j, "schema"), "attributes");
  if (!attrs.is_array()) throw InvariantViolation("schema attributes must be an array");
  for (const auto& a : attrs) schema.attributes.push_back(a.get<std::string>());

  QASample qa = qa_from_json(field(j, "qa"));
  schema.question_id = qa.id;

  const Json& v = field(j, "verdict");
  pipeline::VerificationVerdict verdict{boolean(v, "passed"), str(v, "predicted_answer"), str(v, "judge_raw")};

  const Json& r = field(j, "refinement");
  pipeline::RefinementResult refinement{structured, integer(r, "iterations_used"), {}, boolean(r, "converged")};
  for (const auto& b : field(r, "sufficiency_history")) refinement.sufficiency_history.push_back(b.get<bool>());

  const Json& p = field(j, "provenance");
  pipeline::Provenance provenance{string_map_from(field(p, "backends")), string_map_from(field(p, "templates"))};

  return pipeline::CuratedSample{std::move(qa),         sso::parse_steps(str(j, "trace")), std::move(structured),
                                 std::move(schema),     std::move(verdict),                std::move(refinement),
                                 std::move(provenance), boolean(j, "kept")};
}

Json to_json(const pipeline::SampleFailure& f) {
  return Json{{"sample_id", f.sample_id},
              {"stage", f.stage},
              {"error", f.error},
              {"raw_text", f.raw_text},
              {"version", kFormatVersion}};
}

pipeline::SampleFailure failure_from_json(const Json& j) {
  check_version(j);
  return {str(j, "sample_id"), str(j, "stage"), str(j, "error"), str(j, "raw_text")};
}

// --- rewards ----------------------------------------------------------------------

Json to_json(const reward::RewardConfig& cfg) {
  return Json{{"alpha", cfg.alpha},
              {"epsilon", cfg.epsilon},
              {"beta", cfg.beta},
              {"gamma_correct", cfg.gamma_correct},
              {"gamma_incorrect", cfg.gamma_incorrect},
              {"gamma_format_error", cfg.gamma_format_error},
              {"correct_threshold", cfg.correct_threshold},
              {"overthink_step_cap", cfg.overthink_step_cap},
              {"std_floor", cfg.std_floor}};
}

reward::RewardConfig reward_config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("reward config must be an object");
  reward::RewardConfig cfg;
  auto read = [&](const char* name, double& slot) {
    if (j.contains(name)) slot = number(j, name);
  };
  read("alpha", cfg.alpha);
  read("epsilon", cfg.epsilon);
  read("beta", cfg.beta);
  read("gamma_correct", cfg.gamma_correct);
  read("gamma_incorrect", cfg.gamma_incorrect);
  read("gamma_format_error", cfg.gamma_format_error);
  read("correct_threshold", cfg.correct_threshold);
  read("std_floor", cfg.std_floor);
  if (j.contains("overthink_step_cap")) cfg.overthink_step_cap = integer(j, "overthink_step_cap");
  for (const auto& [key, _] : j.items()) {
    static const std::set<std::string> known = {"alpha",         "epsilon",           "beta",
                                                "gamma_correct", "gamma_incorrect",   "gamma_format_error",
                                                "std_floor",     "correct_threshold", "overthink_step_cap"};
    if (!known.count(key)) throw ConfigError("unknown reward config key '" + key + "'");
  }
  try {
    reward::check_config(cfg);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

Json to_json(const reward::RewardBreakdown& b) {
  Json steps = Json::array();
  for (const auto& s : b.steps)
    steps.push_back(Json{{"consistent", s.consistent}, {"missing", s.missing}, {"unparseable", s.unparseable}});
  return Json{{"format", b.format},
              {"s_struct", b.s_struct},
              {"s_sem", b.s_sem},
              {"answer", b.answer},
              {"answer_empty", b.answer_empty},
              {"process_raw", b.process_raw},
              {"gamma", b.gamma},
              {"process_scaled", b.process_scaled},
              {"total", b.total},
              {"step_count", b.step_count},
              {"steps", std::move(steps)},
              {"audit_ids", b.audit_ids},
              {"version", kFormatVersion}};
}

reward::RewardBreakdown breakdown_from_json(const Json& j) {
  check_version(j);
  reward::RewardBreakdown b;
  b.format = number(j, "format");
  b.s_struct = number(j, "s_struct");
  b.s_sem = number(j, "s_sem");
  b.answer = number(j, "answer");
  b.answer_empty = boolean(j, "answer_empty");
  b.process_raw = number(j, "process_raw");
  b.gamma = number(j, "gamma");
  b.process_scaled = number(j, "process_scaled");
  b.total = number(j, "total");
  b.step_count = integer(j, "step_count");
  for (const auto& s : field(j, "steps"))
    b.steps.push_back({boolean(s, "consistent"), boolean(s, "missing"), boolean(s, "unparseable")});
  for (const auto& a : field(j, "audit_ids")) b.audit_ids.push_back(a.get<std::string>());
  return b;
}

Json to_json(const RewardRequest& r) {
  Json j{{"question", r.input.question},
         {"gold_answer", r.input.gold_answer},
         {"reference_target", r.input.reference_target},
         {"rollout", r.input.rollout},
         {"structure_kind", std::string(sso::kind_name(r.input.kind))}};
  if (r.group_id) j["group_id"] = *r.group_id;
  j["version"] = kFormatVersion;
  return j;
}

RewardRequest reward_request_from_json(const Json& j) {
  check_version(j, false);
  RewardRequest r;
  r.input.question = str(j, "question");
  r.input.gold_answer = str(j, "gold_answer");
  r.input.reference_target = str(j, "reference_target");
  r.input.rollout = str(j, "rollout");
  r.input.kind = sso::parse_kind(str(j, "structure_kind"));
  if (j.contains("group_id") && !j["group_id"].is_null()) r.group_id = str(j, "group_id");
  return r;
}

// --- evaluation -------------------------------------------------------------------

Json to_json(const eval::EvalRecord& r) {
  return Json{{"qa_id", r.qa_id},
              {"task_category", category_json(r.task_category)},
              {"predicted_answer", r.predicted_answer},
              {"judge_score", r.judge_score},
              {"latency_seconds", r.latency_seconds},
              {"version", kFormatVersion}};
}

eval::EvalRecord eval_record_from_json(const Json& j) {
  check_version(j);
  eval::EvalRecord r;
  r.qa_id = str(j, "qa_id");
  r.task_category = category_from(j, "task_category");
  r.predicted_answer = str(j, "predicted_answer");
  r.judge_score = integer(j, "judge_score");
  r.latency_seconds = number(j, "latency_seconds");
  if (r.judge_score < 0 || r.judge_score > 100) throw ScoreOutOfRange("judge_score outside [0, 100]");
  if (!(r.latency_seconds >= 0)) throw InvariantViolation("latency_seconds must be >= 0");
  return r;
}

Json to_json(const eval::EvalReport& r) {
  auto summary = [](const eval::ScoreSummary& s) {
    return Json{{"average_score", s.average_score}, {"perfect_rate", s.perfect_rate}, {"n", s.n}};
  };
  Json per = Json::object();
  for (const auto& [name, s] : r.per_category) per[name] = summary(s);
  return Json{{"overall", summary(r.overall)},
              {"per_category", std::move(per)},
              {"mean_latency_seconds", r.mean_latency_seconds},
              {"version", kFormatVersion}};
}

// --- files ------------------------------------------------------------------------

std::string dump(const Json& j) {
  return j.dump(-1, ' ', false, Json::error_handler_t::strict);
}

JsonlContents read_jsonl(const std::filesystem::path& path, bool lenient) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  JsonlContents out;
  std::string line;
  std::size_t number_of_line = 0;
  while (std::getline(in, line)) {
    ++number_of_line;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::is_blank(line)) continue;
    try {
      out.records.push_back(Json::parse(line));
      out.lines.push_back(number_of_line);
    } catch (const Json::parse_error& e) {
      if (!lenient) throw IoError(error_at(path, number_of_line, e.what()));
      out.errors.push_back({number_of_line, e.what()});
    }
  }
  if (in.bad()) throw IoError(path.string() + ": read failed");
  return out;
}

std::size_t write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  for (const auto& r : records) out << dump(r) << '\n';
  out.flush();
  if (!out) throw IoError(path.string() + ": write failed");
  return records.size();
}

}  // namespace costforge::records
