#include "costforge/dataset.hpp"

#include <algorithm>

#include "costforge/error.hpp"

namespace costforge::dataset {

using records::Json;

TrainingSample build_training_sample(const pipeline::CuratedSample& curated) {
  std::string sso_text;
  try {
    sso::check_invariants(curated.sso);
    sso_text = sso::serialize_structured_output(curated.sso);
  } catch (const InvariantViolation& e) {
    throw InvariantViolation("sample " + curated.qa.id + ": " + e.what());
  }
  const std::string& trace = curated.trace.raw_text;
  for (std::string_view tag : {"<reasoning>", "</reasoning>", "<answer>", "</answer>"})
    if (trace.find(tag) != std::string::npos)
      throw InvariantViolation("sample " + curated.qa.id + ": trace contains the tag " + std::string(tag));

  TrainingSample s;
  s.instruction = curated.qa.question;
  s.document = render_documents(curated.qa.documents);
  s.target = "<reasoning>" + trace + "</reasoning>\n<answer>" + sso_text + "</answer>";
  s.meta.structure_kind = curated.sso.kind();
  s.meta.task_category = curated.qa.task_category;
  s.meta.kept = curated.kept;
  s.meta.iterations_used = curated.refinement.iterations_used;
  s.meta.domain_tag = curated.qa.domain_tag;
  return s;
}

std::pair<sso::CoSTTrace, sso::StructuredOutput> parse_target(const TrainingSample& sample) {
  const sso::TaggedOutput tagged = sso::extract_tagged_sections(sample.target);
  return {sso::parse_steps(tagged.reasoning), sso::parse_structured_output(tagged.answer, sample.meta.structure_kind)};
}

Json to_json(const TrainingSample& s) {
  Json meta{{"structure_kind", std::string(sso::kind_name(s.meta.structure_kind))},
            {"task_category", s.meta.task_category ? Json(std::string(category_name(*s.meta.task_category)))
                                                   : Json(nullptr)},
            {"kept", s.meta.kept},
            {"iterations_used", s.meta.iterations_used},
            {"domain_tag", s.meta.domain_tag}};
  return Json{{"instruction", s.instruction},
              {"document", s.document},
              {"target", s.target},
              {"meta", std::move(meta)},
              {"version", s.version}};
}

TrainingSample training_sample_from_json(const Json& j) {
  records::check_version(j);
  TrainingSample s;
  try {
    s.instruction = j.at("instruction").get<std::string>();
    s.document = j.at("document").get<std::string>();
    s.target = j.at("target").get<std::string>();
    const Json& meta = j.at("meta");
    s.meta.structure_kind = sso::parse_kind(meta.at("structure_kind").get<std::string>());
    if (meta.contains("task_category") && !meta["task_category"].is_null())
      s.meta.task_category = parse_category(meta["task_category"].get<std::string>());
    s.meta.kept = meta.at("kept").get<bool>();
    s.meta.iterations_used = meta.at("iterations_used").get<int>();
    s.meta.domain_tag = meta.at("domain_tag").get<std::string>();
  } catch (const Json::exception& e) {
    throw InvariantViolation(std::string("training sample: ") + e.what());
  }
  try {
    parse_target(s);
  } catch (const Error& e) {
    throw InvariantViolation(std::string("training sample target does not parse: ") + e.what());
  }
  return s;
}

std::size_t write_records(const std::filesystem::path& path, const std::vector<TrainingSample>& samples) {
  std::vector<Json> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) rows.push_back(to_json(s));
  return records::write_jsonl(path, rows);
}

std::vector<TrainingSample> read_records(const std::filesystem::path& path, std::vector<records::LineError>* errors) {
  records::JsonlContents contents = records::read_jsonl(path, errors != nullptr);
  if (errors) *errors = contents.errors;
  auto out = records::decode_lines<TrainingSample>(path, contents, training_sample_from_json, errors);
  if (errors)
    std::sort(errors->begin(), errors->end(),
              [](const records::LineError& a, const records::LineError& b) { return a.line < b.line; });
  return out;
}

Split filter_verified(const std::vector<TrainingSample>& samples) {
  Split split;
  split.all_for_grpo = samples;
  for (const auto& s : samples)
    if (s.meta.kept) split.kept_for_sft.push_back(s);
  return split;
}

CorpusStats corpus_stats(const std::vector<TrainingSample>& samples) {
  CorpusStats stats;
  for (auto kind : {sso::StructureKind::Table, sso::StructureKind::Graph, sso::StructureKind::Chunks})
    stats.by_kind[kind] = 0;
  for (const auto& s : samples) {
    ++stats.by_kind[s.meta.structure_kind];
    ++stats.by_category[s.meta.task_category ? std::string(category_name(*s.meta.task_category)) : "Uncategorized"];
    stats.kept += s.meta.kept ? 1 : 0;
  }
  stats.total = samples.size();
  stats.kept_ratio = stats.total ? static_cast<double>(stats.kept) / static_cast<double>(stats.total) : 0.0;
  return stats;
}

Json to_json(const CorpusStats& stats) {
  Json kinds = Json::object();
  for (const auto& [kind, n] : stats.by_kind) kinds[std::string(sso::kind_name(kind))] = n;
  Json cats = Json::object();
  for (const auto& [name, n] : stats.by_category) cats[name] = n;
  return Json{{"total", stats.total},
              {"by_structure_kind", std::move(kinds)},
              {"by_task_category", std::move(cats)},
              {"kept", stats.kept},
              {"kept_ratio", stats.kept_ratio},
              {"version", records::kFormatVersion}};
}

}  // namespace costforge::dataset
