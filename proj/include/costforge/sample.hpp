#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace costforge {

enum class TaskCategory { SpotlightLocating, Comparison, Clustering, ChainOfReasoning };

std::string_view category_name(TaskCategory category);
/// Throws ParseError for unknown names.
TaskCategory parse_category(std::string_view name);

struct Document {
  std::string id;
  std::string text;

  bool operator==(const Document&) const = default;
};

/// A question over a set of long documents, with its reference answer.
struct QASample {
  std::string id;
  std::string question;
  std::vector<Document> documents;
  std::string gold_answer;
  std::optional<TaskCategory> task_category;
  std::string domain_tag;

  bool operator==(const QASample&) const = default;
};

/// Throws InvariantViolation for a blank question or no documents.
void check_sample(const QASample& sample);

/// Documents joined as "<<doc:ID>>\n<text>" blocks separated by newlines.
std::string render_documents(const std::vector<Document>& documents);

}  // namespace costforge
