#pragma once

// Structured outputs (SSOs), CoST traces and tagged model output.
//
// Canonical text forms, one record per line:
//
//   table   | Company | Year |        first row is the header; "\|" escapes a
//           | A | 2020 |               pipe, "\\" a backslash
//   graph   (A) -[owns]-> (B)         one edge per line; "(X)" alone declares an
//           (C)                        isolated node; "\(" "\)" "\[" "\]" escape
//   chunks  [1] alpha @doc:d1         sequential 1-based indices, optional source
//           [2] beta                   id; "[]" alone is the explicit empty set
//
// Parsing is strict. Malformed input is rejected with a positioned ParseError
// rather than repaired.

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "costforge/error.hpp"

namespace costforge::sso {

enum class StructureKind { Table, Graph, Chunks };

/// "table", "graph" or "chunks".
std::string_view kind_name(StructureKind kind);
/// Case-insensitive inverse of kind_name; also accepts "chunk". Throws ParseError.
StructureKind parse_kind(std::string_view name);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  bool operator==(const Table&) const = default;
};

struct Edge {
  std::string source;
  std::string relation;
  std::string target;

  auto operator<=>(const Edge&) const = default;
};

struct Graph {
  std::set<std::string> nodes;
  std::vector<Edge> edges;

  bool operator==(const Graph&) const = default;
};

struct Chunk {
  std::string text;
  std::optional<std::string> doc_id;

  bool operator==(const Chunk&) const = default;
};

struct ChunkSet {
  std::vector<Chunk> items;
  /// An empty set is only valid when flagged; distinguishes "nothing relevant
  /// found" from a dropped answer.
  bool explicitly_empty = false;

  bool operator==(const ChunkSet&) const = default;
};

/// A table, graph or chunk set. The variant guarantees exactly one payload,
/// matching kind().
class StructuredOutput {
 public:
  explicit StructuredOutput(Table t) : value_(std::move(t)) {}
  explicit StructuredOutput(Graph g) : value_(std::move(g)) {}
  explicit StructuredOutput(ChunkSet c) : value_(std::move(c)) {}

  StructureKind kind() const noexcept;

  const Table& table() const;
  const Graph& graph() const;
  const ChunkSet& chunks() const;

  /// True for a table without header and rows, a graph without nodes, or a
  /// chunk set without items.
  bool empty() const noexcept;

  bool operator==(const StructuredOutput&) const = default;

 private:
  std::variant<Table, Graph, ChunkSet> value_;
};

/// Throws InvariantViolation when `s` breaks the canonical-form rules.
void check_invariants(const StructuredOutput& s);

/// Deterministic canonical text. Throws InvariantViolation.
std::string serialize_structured_output(const StructuredOutput& s);

/// Strict inverse of serialize_structured_output. Throws ParseError with the
/// offending position, or KindMismatch when the text is clearly another kind.
StructuredOutput parse_structured_output(std::string_view answer, StructureKind kind);

// --- schema validation ---------------------------------------------------------

struct Schema {
  StructureKind kind = StructureKind::Table;
  std::vector<std::string> attributes;
  std::string question_id;

  bool operator==(const Schema&) const = default;
};

/// Throws InvariantViolation for an empty, blank or duplicated attribute list.
void check_schema(const Schema& schema);

struct ValidationReport {
  std::vector<std::string> missing;
  std::vector<std::string> extra;
  std::size_t empty_cells = 0;
  std::size_t row_count = 0;
  std::size_t ragged_rows = 0;
  bool aligned = false;

  bool operator==(const ValidationReport&) const = default;
};

/// Tables compare the header with the attribute set. Graphs and chunk sets
/// count an attribute as present when it occurs (case-insensitively) in a
/// node, relation or excerpt. Throws KindMismatch.
ValidationReport validate_against_schema(const StructuredOutput& s, const Schema& schema);

// --- CoST traces -----------------------------------------------------------------

struct Step {
  int index = 0;         ///< 1-based position in the trace
  int label_number = 0;  ///< the number the model wrote, e.g. 3 for "Step 3:"
  std::string label;     ///< verbatim label text, e.g. "Step 3:"
  std::string body;

  bool operator==(const Step&) const = default;
};

struct CoSTTrace {
  std::string raw_text;
  std::string preamble;  ///< text before the first label
  std::vector<Step> steps;

  /// Labels read 1, 2, ..., N. False for an empty trace.
  bool sequential_labels() const noexcept;

  bool operator==(const CoSTTrace&) const = default;
};

/// Splits reasoning on lines starting with "Step <n>:" or "Step <n>."
/// (case-insensitive). Zero labels yields zero steps.
CoSTTrace parse_steps(std::string_view reasoning);

// --- tagged model output -----------------------------------------------------------

struct TaggedOutput {
  std::string reasoning;
  std::string answer;
  std::string extraneous;  ///< top-level text outside both tag pairs, concatenated

  bool operator==(const TaggedOutput&) const = default;
};

/// Requires exactly one <reasoning>...</reasoning> followed by exactly one
/// <answer>...</answer>. Throws MalformedTags.
TaggedOutput extract_tagged_sections(std::string_view text);

/// Inverse of extract_tagged_sections for outputs whose extraneous text sits
/// between the two sections (the training-target layout).
std::string serialize_tagged(const TaggedOutput& t);

}  // namespace costforge::sso
