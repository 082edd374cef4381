#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace costforge::llm {

enum class TemplateId {
  StructureSelect,
  SchemaConstruct,
  TraceGenerate,
  Verify,
  Refine,
  SufficiencyCheck,
  SemanticScore,
  ConsistencyCheck,
  TwoHopReason,
  JudgeScore,
  BaselineExtract,
};

/// File stem and wire name, e.g. "trace_generate".
std::string_view template_name(TemplateId id);
TemplateId parse_template_id(std::string_view name);
const std::vector<TemplateId>& all_template_ids();

using Bindings = std::map<std::string, std::string>;

/// A prompt body with `{{name}}` placeholders.
class PromptTemplate {
 public:
  /// Throws ConfigError when a `{{` does not open a well-formed placeholder.
  PromptTemplate(TemplateId id, std::string body);

  TemplateId id() const noexcept { return id_; }
  const std::string& body() const noexcept { return body_; }
  /// Placeholder names in order of first appearance.
  const std::vector<std::string>& placeholders() const noexcept { return placeholders_; }
  /// Short content hash, recorded as provenance.
  std::string version() const;

  /// Substitutes every placeholder. Values are inserted verbatim and never
  /// rescanned. Throws MissingBinding for the first unbound placeholder.
  std::string render(const Bindings& bindings) const;

 private:
  TemplateId id_;
  std::string body_;
  std::vector<std::string> placeholders_;
};

class TemplateStore {
 public:
  /// The bodies shipped in prompts/, compiled into the library.
  static TemplateStore embedded();
  /// Reads prompts/<id>.txt from `dir`; ids without a file keep the embedded body.
  static TemplateStore from_directory(const std::filesystem::path& dir);

  const PromptTemplate& get(TemplateId id) const;
  std::string render(TemplateId id, const Bindings& bindings) const { return get(id).render(bindings); }

 private:
  std::map<TemplateId, PromptTemplate> templates_;
};

/// Renders with the embedded store.
std::string render_prompt(TemplateId id, const Bindings& bindings);

}  // namespace costforge::llm
