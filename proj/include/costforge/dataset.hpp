#pragma once

// Training samples rendered from curated (trace, SSO) pairs, their record
// files, the SFT/GRPO split and corpus statistics.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "costforge/pipeline.hpp"
#include "costforge/records.hpp"

namespace costforge::dataset {

struct SampleMeta {
  sso::StructureKind structure_kind = sso::StructureKind::Table;
  std::optional<TaskCategory> task_category;
  bool kept = false;
  int iterations_used = 0;
  std::string domain_tag;

  bool operator==(const SampleMeta&) const = default;
};

/// One (instruction, documents, trace, structured output) training example.
struct TrainingSample {
  std::string instruction;
  std::string document;
  /// "<reasoning>" + trace + "</reasoning>\n<answer>" + SSO + "</answer>"
  std::string target;
  SampleMeta meta;
  std::string version = records::kFormatVersion;

  bool operator==(const TrainingSample&) const = default;
};

/// Throws InvariantViolation when the trace or SSO cannot be rendered.
TrainingSample build_training_sample(const pipeline::CuratedSample& curated);

/// Splits a target back into its trace and SSO. Throws MalformedTags,
/// ParseError or KindMismatch.
std::pair<sso::CoSTTrace, sso::StructuredOutput> parse_target(const TrainingSample& sample);

records::Json to_json(const TrainingSample& s);
/// Throws SchemaVersionMismatch or InvariantViolation (including a target
/// that does not re-parse).
TrainingSample training_sample_from_json(const records::Json& j);

std::size_t write_records(const std::filesystem::path& path, const std::vector<TrainingSample>& samples);

/// Strict by default. With `errors` set, undecodable lines are reported there
/// and skipped instead of throwing.
std::vector<TrainingSample> read_records(const std::filesystem::path& path,
                                         std::vector<records::LineError>* errors = nullptr);

struct Split {
  std::vector<TrainingSample> kept_for_sft;
  std::vector<TrainingSample> all_for_grpo;
};

Split filter_verified(const std::vector<TrainingSample>& samples);

struct CorpusStats {
  std::map<sso::StructureKind, std::size_t> by_kind;
  /// Keyed by category name; "Uncategorized" when absent.
  std::map<std::string, std::size_t> by_category;
  std::size_t total = 0;
  std::size_t kept = 0;
  double kept_ratio = 0.0;  ///< 0 for an empty corpus

  bool operator==(const CorpusStats&) const = default;
};

CorpusStats corpus_stats(const std::vector<TrainingSample>& samples);
records::Json to_json(const CorpusStats& stats);

/// Fisher-Yates shuffle driven by mt19937_64(seed).
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed);

}  // namespace costforge::dataset

#include <limits>
#include <random>

namespace costforge::dataset {

template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    // Bounded draw by rejection so the result does not depend on the
    // standard library's distribution implementation.
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw;
    do {
      draw = rng();
    } while (draw >= limit);
    std::swap(items[i - 1], items[static_cast<std::size_t>(draw % bound)]);
  }
}

}  // namespace costforge::dataset
