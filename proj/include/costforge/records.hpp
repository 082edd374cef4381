#pragma once

// Canonical JSON record forms and line-delimited record files. Every record
// carries "version": "1" as its last field; field order is fixed so that
// writing the same value always produces the same bytes.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "costforge/eval.hpp"
#include "costforge/pipeline.hpp"
#include "costforge/reward.hpp"
#include "costforge/sample.hpp"

namespace costforge::records {

using Json = nlohmann::ordered_json;

inline constexpr const char* kFormatVersion = "1";

/// Throws SchemaVersionMismatch when "version" is present and not "1", or
/// absent while `required`.
void check_version(const Json& j, bool required = true);

Json to_json(const QASample& qa);
/// The version field is optional on question records.
QASample qa_from_json(const Json& j);

/// The SSO and trace are stored in their canonical text forms. Throws
/// InvariantViolation when the refinement's final SSO differs from the
/// sample's SSO.
Json to_json(const pipeline::CuratedSample& c);
pipeline::CuratedSample curated_from_json(const Json& j);

Json to_json(const pipeline::SampleFailure& f);
pipeline::SampleFailure failure_from_json(const Json& j);

Json to_json(const reward::RewardConfig& cfg);
/// Missing keys keep their defaults; the result is range-checked.
reward::RewardConfig reward_config_from_json(const Json& j);

Json to_json(const reward::RewardBreakdown& b);
reward::RewardBreakdown breakdown_from_json(const Json& j);

/// Request body for one rollout: question, gold_answer, reference_target,
/// rollout, structure_kind and an optional group_id.
struct RewardRequest {
  reward::RolloutInput input;
  std::optional<std::string> group_id;

  bool operator==(const RewardRequest& o) const {
    return input.question == o.input.question && input.gold_answer == o.input.gold_answer &&
           input.reference_target == o.input.reference_target && input.rollout == o.input.rollout &&
           input.kind == o.input.kind && group_id == o.group_id;
  }
};

Json to_json(const RewardRequest& r);
RewardRequest reward_request_from_json(const Json& j);

Json to_json(const eval::EvalRecord& r);
eval::EvalRecord eval_record_from_json(const Json& j);
Json to_json(const eval::EvalReport& r);

/// Compact single-line rendering used for every record file.
std::string dump(const Json& j);

struct LineError {
  std::size_t line = 0;  ///< 1-based
  std::string message;
};

struct JsonlContents {
  std::vector<Json> records;
  /// Line number of each record, parallel to `records`.
  std::vector<std::size_t> lines;
  /// Only filled in lenient mode.
  std::vector<LineError> errors;
};

/// Reads one JSON value per non-blank line. In strict mode the first bad line
/// throws IoError naming the file and line; in lenient mode bad lines are
/// collected and skipped. Throws IoError when the file cannot be opened.
JsonlContents read_jsonl(const std::filesystem::path& path, bool lenient = false);

/// Writes one record per line, replacing the file. Returns the count.
std::size_t write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records);

/// Decodes every line with `decode`; decode errors are reported like JSON
/// errors, with the line number.
template <typename T, typename Decode>
std::vector<T> decode_lines(const std::filesystem::path& path, const JsonlContents& contents, Decode decode,
                            std::vector<LineError>* errors = nullptr);

std::string error_at(const std::filesystem::path& path, std::size_t line, const std::string& message);

}  // namespace costforge::records

#include "costforge/error.hpp"

namespace costforge::records {

template <typename T, typename Decode>
std::vector<T> decode_lines(const std::filesystem::path& path, const JsonlContents& contents, Decode decode,
                            std::vector<LineError>* errors) {
  std::vector<T> out;
  out.reserve(contents.records.size());
  for (std::size_t i = 0; i < contents.records.size(); ++i) {
    try {
      out.push_back(decode(contents.records[i]));
    } catch (const SchemaVersionMismatch&) {
      throw;
    } catch (const std::exception& e) {
      if (!errors) throw IoError(error_at(path, contents.lines[i], e.what()));
      errors->push_back({contents.lines[i], e.what()});
    }
  }
  return out;
}

}  // namespace costforge::records
