#pragma once

// Loaders for the three benchmark distributions plus the canonical cache
// format. Native layouts are described in docs/datasets.md.
//
//   openbookqa     <dir>/test.jsonl (eval, all 500)     <dir>/train.jsonl (pool)
//   commonsenseqa  <dir>/dev_rand_split.jsonl (eval, first 500)
//                  <dir>/train_rand_split.jsonl (pool)
//   mmlu           <dir>/test/<subject>_test.csv (eval, first 20 per subject,
//                  subjects in lexicographic filename order)
//                  <dir>/dev/*_dev.csv + <dir>/val/*_val.csv (pool)
//   canonical      <dir>/eval.jsonl, <dir>/pool.jsonl (no subsetting)

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sfc/instance.hpp"

namespace sfc {

enum class DatasetProfile { OpenbookQA, CommonsenseQA, MMLU, Canonical };

DatasetProfile parse_profile(std::string_view name);
std::string_view profile_name(DatasetProfile profile);

// Expected evaluation-split size after subsetting; nullopt for canonical.
std::optional<std::size_t> expected_eval_count(DatasetProfile profile);
// Required choices per instance; nullopt for canonical (any count >= 2).
std::optional<std::size_t> expected_choice_count(DatasetProfile profile);

inline constexpr std::size_t kMmluPerSubject = 20;

struct LoadOptions {
  // Reject evaluation splits whose subset size differs from the benchmark's.
  bool enforce_counts = true;
};

std::vector<Instance> load_dataset(DatasetProfile profile, const std::filesystem::path& dir,
                                   LoadOptions options = {});

// Demonstration pool. Loads the evaluation split as well and throws
// ValidationError if the two share an id.
std::vector<Instance> training_pool(DatasetProfile profile, const std::filesystem::path& dir,
                                    LoadOptions options = {});

void check_disjoint(std::span<const Instance> pool, std::span<const Instance> eval);

// Parsers for single native files; exposed for tests and tooling.
std::vector<Instance> parse_qa_jsonl(const std::filesystem::path& file,
                                     std::optional<std::size_t> limit = std::nullopt);
std::vector<Instance> parse_mmlu_csv(const std::filesystem::path& file, const std::string& subject,
                                     const std::string& split,
                                     std::optional<std::size_t> limit = std::nullopt);

// RFC 4180 records; each record is paired with the 1-based line it starts on.
struct CsvRecord {
  std::size_t line = 0;
  std::vector<std::string> fields;
};
std::vector<CsvRecord> parse_csv(std::string_view text, const std::string& source);

}  // namespace sfc
