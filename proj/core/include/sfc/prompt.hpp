#pragma once

// Prompt rendering for the three answer formats. The byte-level grammar is
// pinned in docs/prompt_grammar.md and by the golden files under
// tests/golden/; any change here must regenerate both.
//
//   string          <demo q> <demo answer text>\n ... <test q>
//   string_answer   [header\n\n]
//                   question: <q>\nanswer choices: a, b, c, or d\n
//                   The correct answer is: <answer text>\n###\n ... (test ends after "is: ")
//   enumerated      [header\n\n]
//                   Question: <q>\nChoices:\n  A: a\n  B: b\n...Answer: <label>\n\n
//                   ... (test ends after "Answer: ")

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sfc/instance.hpp"

namespace sfc {

enum class PromptFormat { String, StringAnswer, Enumerated };

PromptFormat parse_format(std::string_view name);
std::string_view format_name(PromptFormat format);

// The six conditioning contexts used to separate the effect of seeing the
// question from the effect of seeing the answer choices.
enum class AblationTag {
  None,                   // empty context: the PMI denominator
  ChoicesEnum,            // L_enum
  ChoicesString,          // L_string
  Question,               // q
  QuestionChoicesEnum,    // q+L_enum
  QuestionChoicesString,  // q+L_string
};

AblationTag parse_ablation_tag(std::string_view name);
std::string_view ablation_tag_name(AblationTag tag);
const std::vector<AblationTag>& all_ablation_tags();

inline constexpr std::size_t kExamplePoolSize = 8;

// Shot counts of the standard sweep; others are allowed but off-grid.
bool is_standard_shot_count(std::size_t shots);

struct PromptSpec {
  PromptFormat format = PromptFormat::String;
  std::size_t shots = 0;
  std::uint64_t seed = 0;
  std::optional<std::string> header;
  // The selected demonstrations, in order; the first `shots` are rendered.
  std::vector<Instance> example_pool;
};

struct RenderedPrompt {
  std::string prompt_text;
  // One continuation per choice: the label for enumerated prompts, the choice
  // text otherwise (ablation contexts always use the text).
  std::vector<std::string> targets;
  // Set for ablation contexts only.
  std::optional<AblationTag> ablation_tag;
  // Inserted between prompt_text and a target (" " for the string format,
  // whose prompt ends at the bare stem).
  std::string joiner;
};

// Deterministically draws kExamplePoolSize demonstrations from `pool` for
// `seed` and returns the first k. Throws ConfigError when the pool holds
// fewer than kExamplePoolSize instances or k > kExamplePoolSize.
std::vector<Instance> select_examples(std::span<const Instance> pool, std::uint64_t seed,
                                      std::size_t k);

RenderedPrompt render(const PromptSpec& spec, const Instance& instance);

struct HeaderSet {
  std::optional<std::string> string;
  std::optional<std::string> string_answer;
  std::optional<std::string> enumerated;

  const std::optional<std::string>& for_format(PromptFormat format) const;
};

// `headers` supplies the instruction line used by the L_* and q+L_* contexts.
RenderedPrompt ablation_context(const Instance& instance, AblationTag tag,
                                const HeaderSet& headers = {});

// How a target is attached to its prompt when scored.
enum class TargetSpacing {
  Verbatim,      // prompt as rendered, target as is ("Answer: " + "D")
  LeadingSpace,  // trailing space moves onto the target ("Answer:" + " D")
};

TargetSpacing parse_target_spacing(std::string_view name);
std::string_view target_spacing_name(TargetSpacing spacing);

struct ScoringPair {
  std::string prompt;
  std::string continuation;

  friend bool operator==(const ScoringPair&, const ScoringPair&) = default;
};

ScoringPair scoring_pair(std::string_view prompt, std::string_view joiner,
                         std::string_view target, TargetSpacing spacing);
ScoringPair scoring_pair(const RenderedPrompt& rendered, std::size_t target,
                         TargetSpacing spacing);

// Instruction headers per dataset and format. "{subject}" inside a header is
// replaced by the instance subject with underscores turned into spaces.
class TemplateConfig {
 public:
  // Headers reproducing the reference prompts for openbookqa / commonsenseqa
  // and analogous ones for mmlu.
  static TemplateConfig defaults();
  // Overlays the JSON document on top of defaults(); see docs/formats.md.
  static TemplateConfig from_json(std::string_view text);
  static TemplateConfig load(const std::string& path);

  HeaderSet headers_for(std::string_view dataset,
                        const std::optional<std::string>& subject = std::nullopt) const;
  void set(std::string dataset, HeaderSet headers) { datasets_[std::move(dataset)] = std::move(headers); }

 private:
  std::map<std::string, HeaderSet, std::less<>> datasets_;
};

}  // namespace sfc
