#include "costforge/sample.hpp"

#include "costforge/error.hpp"
#include "costforge/text.hpp"

namespace costforge {

std::string_view category_name(TaskCategory category) {
  switch (category) {
    case TaskCategory::SpotlightLocating: return "SpotlightLocating";
    case TaskCategory::Comparison: return "Comparison";
    case TaskCategory::Clustering: return "Clustering";
    case TaskCategory::ChainOfReasoning: return "ChainOfReasoning";
  }
  return "SpotlightLocating";
}

TaskCategory parse_category(std::string_view name) {
  for (TaskCategory c : {TaskCategory::SpotlightLocating, TaskCategory::Comparison, TaskCategory::Clustering,
                         TaskCategory::ChainOfReasoning})
    if (text::iequals(name, category_name(c))) return c;
  throw ParseError("unknown task category '" + std::string(name) + "'", 1, 1);
}

void check_sample(const QASample& sample) {
  if (text::is_blank(sample.question)) throw InvariantViolation("sample " + sample.id + ": question is empty");
  if (sample.documents.empty()) throw InvariantViolation("sample " + sample.id + ": no documents");
}

std::string render_documents(const std::vector<Document>& documents) {
  std::string out;
  for (std::size_t i = 0; i < documents.size(); ++i) {
    if (i) out.push_back('\n');
    out += "<<doc:" + documents[i].id + ">>\n" + documents[i].text;
  }
  return out;
}

}  // namespace costforge
