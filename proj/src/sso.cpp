#include "costforge/sso.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <unordered_set>

#include "costforge/text.hpp"

namespace costforge::sso {

namespace {

constexpr std::string_view kDocMarker = " @doc:";

[[noreturn]] void invariant(const std::string& what) { throw InvariantViolation(what); }

void check_atom(std::string_view value, std::string_view what, bool allow_empty) {
  if (!allow_empty && value.empty()) invariant(std::string(what) + " must not be empty");
  if (value.find_first_of("\r\n") != std::string_view::npos)
    invariant(std::string(what) + " must not contain a line break: \"" + std::string(value) + "\"");
  if (text::trim(value).size() != value.size())
    invariant(std::string(what) + " must not have surrounding whitespace: \"" + std::string(value) + "\"");
}

std::string escape(std::string_view s, std::string_view specials) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '\\' || specials.find(c) != std::string_view::npos) out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

bool has_edge_endpoint(const Graph& g, const std::string& node) {
  return std::any_of(g.edges.begin(), g.edges.end(),
                     [&](const Edge& e) { return e.source == node || e.target == node; });
}

// A line of the answer with its 1-based number and the column of its first
// non-blank character.
struct SourceLine {
  std::string_view text;  // trimmed
  std::size_t number;
  std::size_t column;
};

std::vector<SourceLine> content_lines(std::string_view answer) {
  std::vector<SourceLine> out;
  std::size_t number = 0;
  for (std::string_view raw : text::split_lines(answer)) {
    ++number;
    std::string_view left = text::trim_left(raw);
    std::string_view trimmed = text::trim(raw);
    if (trimmed.empty()) continue;
    out.push_back({trimmed, number, raw.size() - left.size() + 1});
  }
  return out;
}

[[noreturn]] void fail_at(const SourceLine& line, std::size_t offset, const std::string& message) {
  throw ParseError(message, line.number, line.column + offset);
}

// Reads escaped text starting at `pos` up to (not including) the unescaped
// `close` character. Leaves `pos` on the closing character.
std::string read_escaped(const SourceLine& line, std::size_t& pos, char open, char close,
                         std::string_view what) {
  std::string out;
  std::string_view s = line.text;
  while (pos < s.size()) {
    char c = s[pos];
    if (c == '\\') {
      if (pos + 1 >= s.size()) fail_at(line, pos, "dangling escape in " + std::string(what));
      char next = s[pos + 1];
      if (next != '\\' && next != open && next != close)
        fail_at(line, pos, std::string("invalid escape '\\") + next + "' in " + std::string(what));
      out.push_back(next);
      pos += 2;
      continue;
    }
    if (c == close) return out;
    out.push_back(c);
    ++pos;
  }
  fail_at(line, pos, "unterminated " + std::string(what) + ", expected '" + close + "'");
}

void skip_spaces(std::string_view s, std::size_t& pos) {
  while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
}

std::vector<std::string> parse_table_row(const SourceLine& line) {
  std::string_view s = line.text;
  if (s.front() != '|') fail_at(line, 0, "table row must start with '|'");
  std::vector<std::string> cells;
  std::string cell;
  bool closed = true;
  for (std::size_t i = 1; i < s.size(); ++i) {
    char c = s[i];
    if (c == '\\') {
      if (i + 1 >= s.size()) fail_at(line, i, "dangling escape in table cell");
      char next = s[i + 1];
      if (next != '\\' && next != '|') fail_at(line, i, std::string("invalid escape '\\") + next + "' in table cell");
      cell.push_back(next);
      ++i;
      closed = false;
      continue;
    }
    if (c == '|') {
      cells.emplace_back(text::trim(cell));
      cell.clear();
      closed = true;
      continue;
    }
    cell.push_back(c);
    closed = false;
  }
  if (!closed) fail_at(line, s.size(), "table row must end with '|'");
  if (cells.empty()) fail_at(line, 0, "table row has no cells");
  return cells;
}

Table parse_table(const std::vector<SourceLine>& lines) {
  Table table;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::vector<std::string> cells = parse_table_row(lines[i]);
    if (i == 0) {
      for (const auto& name : cells)
        if (name.empty()) fail_at(lines[i], 0, "empty attribute name in table header");
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size())
      fail_at(lines[i], 0,
              "ragged row: expected " + std::to_string(table.header.size()) + " cells, found " +
                  std::to_string(cells.size()));
    table.rows.push_back(std::move(cells));
  }
  return table;
}

std::string read_node(const SourceLine& line, std::size_t& pos) {
  if (pos >= line.text.size() || line.text[pos] != '(') fail_at(line, pos, "expected '(' to open a node");
  ++pos;
  std::size_t start = pos;
  std::string name = read_escaped(line, pos, '(', ')', "node name");
  ++pos;  // ')'
  if (text::trim(name).empty()) fail_at(line, start, "empty node name");
  return std::string(text::trim(name));
}

Graph parse_graph(const std::vector<SourceLine>& lines) {
  Graph graph;
  for (const auto& line : lines) {
    std::string_view s = line.text;
    std::size_t pos = 0;
    std::string source = read_node(line, pos);
    skip_spaces(s, pos);
    graph.nodes.insert(source);
    if (pos == s.size()) continue;  // isolated node
    if (s.compare(pos, 2, "-[") != 0) fail_at(line, pos, "expected '-[' to open a relation");
    pos += 2;
    std::size_t rel_start = pos;
    std::string relation(text::trim(read_escaped(line, pos, '[', ']', "relation")));
    if (relation.empty()) fail_at(line, rel_start, "empty relation");
    ++pos;  // ']'
    if (s.compare(pos, 2, "->") != 0) fail_at(line, pos, "expected '->' after relation");
    pos += 2;
    skip_spaces(s, pos);
    if (pos == s.size()) fail_at(line, pos, "dangling edge: missing target node");
    std::string target = read_node(line, pos);
    skip_spaces(s, pos);
    if (pos != s.size()) fail_at(line, pos, "unexpected text after edge");
    graph.nodes.insert(target);
    graph.edges.push_back({std::move(source), std::move(relation), std::move(target)});
  }
  return graph;
}

ChunkSet parse_chunks(const std::vector<SourceLine>& lines) {
  ChunkSet set;
  if (lines.size() == 1 && lines.front().text == "[]") {
    set.explicitly_empty = true;
    return set;
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const SourceLine& line = lines[i];
    std::string_view s = line.text;
    if (s == "[]") fail_at(line, 0, "empty-set marker '[]' must be the only line");
    if (s.front() != '[') fail_at(line, 0, "chunk line must start with '[k]'");
    std::size_t close = s.find(']');
    if (close == std::string_view::npos) fail_at(line, s.size(), "unterminated chunk index");
    int index = 0;
    auto [ptr, ec] = std::from_chars(s.data() + 1, s.data() + close, index);
    if (ec != std::errc() || ptr != s.data() + close) fail_at(line, 1, "chunk index must be an integer");
    if (index != static_cast<int>(i) + 1)
      fail_at(line, 1, "chunk index " + std::to_string(index) + " out of sequence, expected " + std::to_string(i + 1));
    std::string_view rest = text::trim(s.substr(close + 1));
    Chunk chunk;
    std::size_t marker = rest.rfind(kDocMarker);
    if (marker != std::string_view::npos) {
      std::string_view id = rest.substr(marker + kDocMarker.size());
      if (id.empty() || id.find_first_of(" \t") != std::string_view::npos)
        fail_at(line, s.size() - rest.size() + marker + 1, "malformed @doc: source id");
      chunk.doc_id = std::string(id);
      rest = text::trim(rest.substr(0, marker));
    }
    if (rest.empty()) fail_at(line, close + 1, "empty chunk text");
    chunk.text = std::string(rest);
    set.items.push_back(std::move(chunk));
  }
  return set;
}

std::optional<StructureKind> apparent_kind(std::string_view first_line) {
  switch (first_line.front()) {
    case '|': return StructureKind::Table;
    case '(': return StructureKind::Graph;
    case '[': return StructureKind::Chunks;
    default: return std::nullopt;
  }
}

bool mentions(const std::vector<std::string>& haystack, std::string_view attribute) {
  std::string needle = text::to_lower(attribute);
  return std::any_of(haystack.begin(), haystack.end(),
                     [&](const std::string& h) { return text::contains(text::to_lower(h), needle); });
}

}  // namespace

std::string_view kind_name(StructureKind kind) {
  switch (kind) {
    case StructureKind::Table: return "table";
    case StructureKind::Graph: return "graph";
    case StructureKind::Chunks: return "chunks";
  }
  return "table";
}

StructureKind parse_kind(std::string_view name) {
  std::string_view t = text::trim(name);
  if (text::iequals(t, "table")) return StructureKind::Table;
  if (text::iequals(t, "graph")) return StructureKind::Graph;
  if (text::iequals(t, "chunks") || text::iequals(t, "chunk")) return StructureKind::Chunks;
  throw ParseError("unknown structure kind '" + std::string(t) + "'", 1, 1);
}

StructureKind StructuredOutput::kind() const noexcept {
  return static_cast<StructureKind>(value_.index());
}

const Table& StructuredOutput::table() const {
  if (auto* t = std::get_if<Table>(&value_)) return *t;
  throw KindMismatch("structured output is a " + std::string(kind_name(kind())) + ", not a table");
}

const Graph& StructuredOutput::graph() const {
  if (auto* g = std::get_if<Graph>(&value_)) return *g;
  throw KindMismatch("structured output is a " + std::string(kind_name(kind())) + ", not a graph");
}

const ChunkSet& StructuredOutput::chunks() const {
  if (auto* c = std::get_if<ChunkSet>(&value_)) return *c;
  throw KindMismatch("structured output is a " + std::string(kind_name(kind())) + ", not a chunk set");
}

bool StructuredOutput::empty() const noexcept {
  switch (kind()) {
    case StructureKind::Table: {
      const auto& t = std::get<Table>(value_);
      return t.header.empty() && t.rows.empty();
    }
    case StructureKind::Graph: return std::get<Graph>(value_).nodes.empty();
    case StructureKind::Chunks: return std::get<ChunkSet>(value_).items.empty();
  }
  return true;
}

void check_invariants(const StructuredOutput& s) {
  switch (s.kind()) {
    case StructureKind::Table: {
      const Table& t = s.table();
      if (t.header.empty()) invariant("table has no header");
      for (const auto& name : t.header) check_atom(name, "header cell", false);
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.rows[r].size() != t.header.size())
          invariant("row " + std::to_string(r + 1) + " has " + std::to_string(t.rows[r].size()) +
                    " cells, header has " + std::to_string(t.header.size()));
        for (const auto& cell : t.rows[r]) check_atom(cell, "table cell", true);
      }
      break;
    }
    case StructureKind::Graph: {
      const Graph& g = s.graph();
      if (g.nodes.empty()) invariant("graph has no nodes");
      for (const auto& n : g.nodes) check_atom(n, "node name", false);
      for (const auto& e : g.edges) {
        check_atom(e.relation, "relation", false);
        if (!g.nodes.count(e.source)) invariant("edge source '" + e.source + "' is not a declared node");
        if (!g.nodes.count(e.target)) invariant("edge target '" + e.target + "' is not a declared node");
      }
      break;
    }
    case StructureKind::Chunks: {
      const ChunkSet& c = s.chunks();
      if (c.items.empty() && !c.explicitly_empty) invariant("empty chunk set must be flagged explicitly_empty");
      if (!c.items.empty() && c.explicitly_empty) invariant("chunk set flagged empty but has items");
      for (const auto& chunk : c.items) {
        check_atom(chunk.text, "chunk text", false);
        if (text::contains(chunk.text, kDocMarker)) invariant("chunk text must not contain \" @doc:\"");
        if (chunk.doc_id) {
          if (chunk.doc_id->empty() || chunk.doc_id->find_first_of(" \t\r\n") != std::string::npos)
            invariant("chunk doc id must be non-empty without whitespace");
        }
      }
      break;
    }
  }
}

std::string serialize_structured_output(const StructuredOutput& s) {
  check_invariants(s);
  std::vector<std::string> lines;
  switch (s.kind()) {
    case StructureKind::Table: {
      auto row_line = [](const std::vector<std::string>& cells) {
        std::vector<std::string> escaped;
        escaped.reserve(cells.size());
        for (const auto& c : cells) escaped.push_back(escape(c, "|"));
        return "| " + text::join(escaped, " | ") + " |";
      };
      const Table& t = s.table();
      lines.push_back(row_line(t.header));
      for (const auto& row : t.rows) lines.push_back(row_line(row));
      break;
    }
    case StructureKind::Graph: {
      const Graph& g = s.graph();
      for (const auto& e : g.edges)
        lines.push_back("(" + escape(e.source, "()") + ") -[" + escape(e.relation, "[]") + "]-> (" +
                        escape(e.target, "()") + ")");
      for (const auto& n : g.nodes)
        if (!has_edge_endpoint(g, n)) lines.push_back("(" + escape(n, "()") + ")");
      break;
    }
    case StructureKind::Chunks: {
      const ChunkSet& c = s.chunks();
      if (c.items.empty()) return "[]";
      for (std::size_t i = 0; i < c.items.size(); ++i) {
        std::string line = "[" + std::to_string(i + 1) + "] " + c.items[i].text;
        if (c.items[i].doc_id) line += std::string(kDocMarker) + *c.items[i].doc_id;
        lines.push_back(std::move(line));
      }
      break;
    }
  }
  return text::join(lines, "\n");
}

StructuredOutput parse_structured_output(std::string_view answer, StructureKind kind) {
  std::vector<SourceLine> lines = content_lines(answer);
  if (lines.empty()) throw ParseError("empty structured output", 1, 1);
  std::optional<StructureKind> seen = apparent_kind(lines.front().text);
  if (!seen)
    fail_at(lines.front(), 0, "unrecognized structure: expected '|', '(' or '[' at start of line");
  if (*seen != kind)
    throw KindMismatch("expected a " + std::string(kind_name(kind)) + " but the content is a " +
                       std::string(kind_name(*seen)));
  switch (kind) {
    case StructureKind::Table: return StructuredOutput(parse_table(lines));
    case StructureKind::Graph: return StructuredOutput(parse_graph(lines));
    case StructureKind::Chunks: return StructuredOutput(parse_chunks(lines));
  }
  throw ParseError("unknown structure kind", 1, 1);
}

void check_schema(const Schema& schema) {
  if (schema.attributes.empty()) throw InvariantViolation("schema has no attributes");
  std::unordered_set<std::string> seen;
  for (const auto& a : schema.attributes) {
    if (text::is_blank(a)) throw InvariantViolation("schema attribute is blank");
    if (!seen.insert(a).second) throw InvariantViolation("duplicate schema attribute '" + a + "'");
  }
}

ValidationReport validate_against_schema(const StructuredOutput& s, const Schema& schema) {
  if (s.kind() != schema.kind)
    throw KindMismatch("schema is for a " + std::string(kind_name(schema.kind)) + " but the output is a " +
                       std::string(kind_name(s.kind())));
  ValidationReport report;
  switch (s.kind()) {
    case StructureKind::Table: {
      const Table& t = s.table();
      for (const auto& a : schema.attributes)
        if (std::find(t.header.begin(), t.header.end(), a) == t.header.end()) report.missing.push_back(a);
      for (const auto& h : t.header)
        if (std::find(schema.attributes.begin(), schema.attributes.end(), h) == schema.attributes.end())
          report.extra.push_back(h);
      for (const auto& row : t.rows) {
        if (row.size() != t.header.size()) ++report.ragged_rows;
        report.empty_cells += static_cast<std::size_t>(
            std::count_if(row.begin(), row.end(), [](const std::string& c) { return text::is_blank(c); }));
      }
      report.row_count = t.rows.size();
      report.aligned = report.missing.empty() && report.extra.empty() && report.ragged_rows == 0;
      return report;
    }
    case StructureKind::Graph: {
      const Graph& g = s.graph();
      std::vector<std::string> terms(g.nodes.begin(), g.nodes.end());
      for (const auto& e : g.edges) terms.push_back(e.relation);
      for (const auto& a : schema.attributes)
        if (!mentions(terms, a)) report.missing.push_back(a);
      report.row_count = g.edges.size();
      break;
    }
    case StructureKind::Chunks: {
      std::vector<std::string> terms;
      for (const auto& c : s.chunks().items) terms.push_back(c.text);
      for (const auto& a : schema.attributes)
        if (!mentions(terms, a)) report.missing.push_back(a);
      report.row_count = terms.size();
      break;
    }
  }
  report.aligned = report.missing.empty();
  return report;
}

bool CoSTTrace::sequential_labels() const noexcept {
  if (steps.empty()) return false;
  for (std::size_t i = 0; i < steps.size(); ++i)
    if (steps[i].label_number != static_cast<int>(i) + 1) return false;
  return true;
}

namespace {

// Matches "Step <n>:" / "Step <n>." at the start of `line` (leading
// whitespace already removed). Returns the label length and number.
std::optional<std::pair<std::size_t, int>> match_step_label(std::string_view line) {
  if (line.size() < 6 || !text::iequals(line.substr(0, 4), "step")) return std::nullopt;
  std::size_t pos = 4;
  while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
  std::size_t digits_start = pos;
  while (pos < line.size() && std::isdigit(static_cast<unsigned char>(line[pos]))) ++pos;
  if (pos == digits_start) return std::nullopt;
  int number = 0;
  auto [ptr, ec] = std::from_chars(line.data() + digits_start, line.data() + pos, number);
  if (ec != std::errc() || ptr != line.data() + pos) return std::nullopt;
  while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
  if (pos >= line.size() || (line[pos] != ':' && line[pos] != '.')) return std::nullopt;
  return std::make_pair(pos + 1, number);
}

}  // namespace

CoSTTrace parse_steps(std::string_view reasoning) {
  CoSTTrace trace;
  trace.raw_text = std::string(reasoning);
  std::string preamble;
  std::string body;
  bool in_step = false;
  auto flush = [&] {
    if (in_step) trace.steps.back().body = std::string(text::trim(body));
    body.clear();
  };
  for (std::string_view line : text::split_lines(reasoning)) {
    std::string_view content = text::trim_left(line);
    if (auto label = match_step_label(content)) {
      flush();
      Step step;
      step.index = static_cast<int>(trace.steps.size()) + 1;
      step.label_number = label->second;
      step.label = std::string(content.substr(0, label->first));
      trace.steps.push_back(std::move(step));
      in_step = true;
      body = std::string(content.substr(label->first));
      continue;
    }
    std::string& target = in_step ? body : preamble;
    if (!target.empty()) target.push_back('\n');
    target.append(line);
  }
  flush();
  trace.preamble = std::string(text::trim(preamble));
  return trace;
}

namespace {

struct TagHit {
  std::size_t pos = std::string_view::npos;
  std::size_t count = 0;
};

TagHit find_tag(std::string_view text, std::string_view tag) {
  TagHit hit;
  for (std::size_t p = text.find(tag); p != std::string_view::npos; p = text.find(tag, p + 1)) {
    if (hit.count == 0) hit.pos = p;
    ++hit.count;
  }
  return hit;
}

}  // namespace

TaggedOutput extract_tagged_sections(std::string_view text) {
  static constexpr std::string_view kTags[] = {"<reasoning>", "</reasoning>", "<answer>", "</answer>"};
  TagHit hits[4];
  for (int i = 0; i < 4; ++i) {
    hits[i] = find_tag(text, kTags[i]);
    if (hits[i].count == 0) throw MalformedTags("missing " + std::string(kTags[i]) + " tag");
    if (hits[i].count > 1) throw MalformedTags("duplicate " + std::string(kTags[i]) + " tag");
  }
  const std::size_t r_open = hits[0].pos, r_close = hits[1].pos, a_open = hits[2].pos, a_close = hits[3].pos;
  if (a_open < r_open) throw MalformedTags("<answer> appears before <reasoning>");
  if (r_close < r_open) throw MalformedTags("</reasoning> appears before <reasoning>");
  if (a_close < a_open) throw MalformedTags("</answer> appears before <answer>");
  if (a_open < r_close) throw MalformedTags("<answer> is nested inside <reasoning>");

  TaggedOutput out;
  const std::size_t r_begin = r_open + kTags[0].size();
  const std::size_t a_begin = a_open + kTags[2].size();
  out.reasoning = std::string(text.substr(r_begin, r_close - r_begin));
  out.answer = std::string(text.substr(a_begin, a_close - a_begin));
  const std::size_t r_end = r_close + kTags[1].size();
  const std::size_t a_end = a_close + kTags[3].size();
  out.extraneous = std::string(text.substr(0, r_open));
  out.extraneous += text.substr(r_end, a_open - r_end);
  out.extraneous += text.substr(a_end);
  return out;
}

std::string serialize_tagged(const TaggedOutput& t) {
  return "<reasoning>" + t.reasoning + "</reasoning>" + t.extraneous + "<answer>" + t.answer + "</answer>";
}

}  // namespace costforge::sso
