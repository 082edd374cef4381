#include "costforge/templates.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "costforge/error.hpp"
#include "costforge/text.hpp"

namespace costforge::llm {

namespace detail {
const std::map<std::string, std::string>& embedded_prompt_bodies();
}

namespace {

constexpr std::pair<TemplateId, std::string_view> kNames[] = {
    {TemplateId::StructureSelect, "structure_select"},
    {TemplateId::SchemaConstruct, "schema_construct"},
    {TemplateId::TraceGenerate, "trace_generate"},
    {TemplateId::Verify, "verify"},
    {TemplateId::Refine, "refine"},
    {TemplateId::SufficiencyCheck, "sufficiency_check"},
    {TemplateId::SemanticScore, "semantic_score"},
    {TemplateId::ConsistencyCheck, "consistency_check"},
    {TemplateId::TwoHopReason, "two_hop_reason"},
    {TemplateId::JudgeScore, "judge_score"},
    {TemplateId::BaselineExtract, "baseline_extract"},
};

bool is_name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Visits the body as alternating literal text and placeholder names.
template <typename Literal, typename Placeholder>
void scan(std::string_view body, TemplateId id, Literal&& on_literal, Placeholder&& on_placeholder) {
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::size_t open = body.find("{{", pos);
    if (open == std::string_view::npos) {
      on_literal(body.substr(pos));
      return;
    }
    on_literal(body.substr(pos, open - pos));
    std::size_t close = body.find("}}", open + 2);
    std::string_view name =
        close == std::string_view::npos ? std::string_view{} : body.substr(open + 2, close - open - 2);
    if (name.empty() || !std::all_of(name.begin(), name.end(), is_name_char))
      throw ConfigError("template " + std::string(template_name(id)) + ": malformed placeholder at offset " +
                        std::to_string(open));
    on_placeholder(name);
    pos = close + 2;
  }
}

}  // namespace

std::string_view template_name(TemplateId id) {
  for (const auto& [tid, name] : kNames)
    if (tid == id) return name;
  return "unknown";
}

TemplateId parse_template_id(std::string_view name) {
  for (const auto& [tid, n] : kNames)
    if (n == name) return tid;
  throw ConfigError("unknown template id '" + std::string(name) + "'");
}

const std::vector<TemplateId>& all_template_ids() {
  static const std::vector<TemplateId> ids = [] {
    std::vector<TemplateId> out;
    for (const auto& entry : kNames) out.push_back(entry.first);
    return out;
  }();
  return ids;
}

PromptTemplate::PromptTemplate(TemplateId id, std::string body) : id_(id), body_(std::move(body)) {
  scan(
      body_, id_, [](std::string_view) {},
      [&](std::string_view name) {
        if (std::find(placeholders_.begin(), placeholders_.end(), name) == placeholders_.end())
          placeholders_.emplace_back(name);
      });
}

std::string PromptTemplate::version() const { return text::hex64(text::fnv1a64(body_)).substr(0, 12); }

std::string PromptTemplate::render(const Bindings& bindings) const {
  for (const auto& name : placeholders_)
    if (!bindings.count(name)) throw MissingBinding(name);
  std::string out;
  out.reserve(body_.size());
  scan(
      body_, id_, [&](std::string_view literal) { out.append(literal); },
      [&](std::string_view name) { out.append(bindings.at(std::string(name))); });
  return out;
}

TemplateStore TemplateStore::embedded() {
  TemplateStore store;
  const auto& bodies = detail::embedded_prompt_bodies();
  for (TemplateId id : all_template_ids()) {
    auto it = bodies.find(std::string(template_name(id)));
    if (it == bodies.end()) throw ConfigError("no embedded prompt for " + std::string(template_name(id)));
    store.templates_.emplace(id, PromptTemplate(id, it->second));
  }
  return store;
}

TemplateStore TemplateStore::from_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("prompt directory not found: " + dir.string());
  TemplateStore store = embedded();
  for (TemplateId id : all_template_ids()) {
    std::filesystem::path file = dir / (std::string(template_name(id)) + ".txt");
    if (!std::filesystem::exists(file)) continue;
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot read prompt file " + file.string());
    std::ostringstream body;
    body << in.rdbuf();
    store.templates_.insert_or_assign(id, PromptTemplate(id, body.str()));
  }
  return store;
}

const PromptTemplate& TemplateStore::get(TemplateId id) const { return templates_.at(id); }

std::string render_prompt(TemplateId id, const Bindings& bindings) {
  static const TemplateStore store = TemplateStore::embedded();
  return store.render(id, bindings);
}

}  // namespace costforge::llm
