#include "sfc/prompt.hpp"

#include <algorithm>
#include <numeric>

#include "sfc/errors.hpp"
#include "sfc/mix.hpp"

namespace sfc {
namespace {

void require_single_line(std::string_view text, const Instance& inst, const char* what) {
  if (text.find_first_of("\r\n") != std::string_view::npos) {
    throw EscapingError(inst.id + ": " + what + " contains a line break and cannot be rendered");
  }
}

void require_renderable(const Instance& inst) {
  require_single_line(inst.question, inst, "question");
  for (const auto& c : inst.choices) {
    require_single_line(c.label, inst, "choice label");
    require_single_line(c.text, inst, "choice text");
  }
}

std::string header_prefix(const std::optional<std::string>& header) {
  return header ? *header + "\n\n" : std::string();
}

// "a, b, c, or d"; "a or b" for two choices.
std::string choice_list(const Instance& inst) {
  const auto& cs = inst.choices;
  if (cs.size() == 1) return cs[0].text;
  if (cs.size() == 2) return cs[0].text + " or " + cs[1].text;
  std::string out;
  for (std::size_t i = 0; i + 1 < cs.size(); ++i) out += cs[i].text + ", ";
  return out + "or " + cs.back().text;
}

std::string string_answer_block(const Instance& inst) {
  return "question: " + inst.question + "\nanswer choices: " + choice_list(inst) +
         "\nThe correct answer is: ";
}

std::string enumerated_choices(const Instance& inst) {
  std::string out = "Choices:\n";
  for (const auto& c : inst.choices) out += "  " + c.label + ": " + c.text + "\n";
  return out;
}

std::string enumerated_block(const Instance& inst) {
  return "Question: " + inst.question + "\n" + enumerated_choices(inst) + "Answer: ";
}

std::vector<std::string> choice_texts(const Instance& inst) {
  std::vector<std::string> out;
  for (const auto& c : inst.choices) out.push_back(c.text);
  return out;
}

std::vector<std::string> choice_labels(const Instance& inst) {
  std::vector<std::string> out;
  for (const auto& c : inst.choices) out.push_back(c.label);
  return out;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace

PromptFormat parse_format(std::string_view name) {
  if (name == "string") return PromptFormat::String;
  if (name == "string_answer") return PromptFormat::StringAnswer;
  if (name == "enumerated") return PromptFormat::Enumerated;
  throw ConfigError("unknown prompt format '" + std::string(name) + "'");
}

std::string_view format_name(PromptFormat format) {
  switch (format) {
    case PromptFormat::String: return "string";
    case PromptFormat::StringAnswer: return "string_answer";
    case PromptFormat::Enumerated: return "enumerated";
  }
  return "unknown";
}

AblationTag parse_ablation_tag(std::string_view name) {
  for (AblationTag tag : all_ablation_tags()) {
    if (ablation_tag_name(tag) == name) return tag;
  }
  throw ConfigError("unknown ablation tag '" + std::string(name) + "'");
}

std::string_view ablation_tag_name(AblationTag tag) {
  switch (tag) {
    case AblationTag::None: return "none";
    case AblationTag::ChoicesEnum: return "L_enum";
    case AblationTag::ChoicesString: return "L_string";
    case AblationTag::Question: return "q";
    case AblationTag::QuestionChoicesEnum: return "q+L_enum";
    case AblationTag::QuestionChoicesString: return "q+L_string";
  }
  return "unknown";
}

const std::vector<AblationTag>& all_ablation_tags() {
  static const std::vector<AblationTag> tags = {
      AblationTag::None,     AblationTag::ChoicesEnum,         AblationTag::ChoicesString,
      AblationTag::Question, AblationTag::QuestionChoicesEnum, AblationTag::QuestionChoicesString};
  return tags;
}

bool is_standard_shot_count(std::size_t shots) {
  return shots == 0 || shots == 1 || shots == 2 || shots == 4 || shots == 8;
}

std::vector<Instance> select_examples(std::span<const Instance> pool, std::uint64_t seed,
                                      std::size_t k) {
  if (k > kExamplePoolSize) {
    throw ConfigError("at most " + std::to_string(kExamplePoolSize) + " demonstrations");
  }
  if (pool.size() < kExamplePoolSize) {
    throw ConfigError("demonstration pool has " + std::to_string(pool.size()) +
                      " instances, need at least " + std::to_string(kExamplePoolSize));
  }
  // Partial Fisher-Yates: the fixed set of 8 depends only on the seed, so
  // every k selects a prefix of the same set.
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < kExamplePoolSize; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<Instance> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(pool[idx[i]]);
  return out;
}

RenderedPrompt render(const PromptSpec& spec, const Instance& instance) {
  if (spec.shots > spec.example_pool.size()) {
    throw ConfigError("shots (" + std::to_string(spec.shots) + ") exceed the example pool (" +
                      std::to_string(spec.example_pool.size()) + ")");
  }
  require_renderable(instance);
  instance.answer_index();
  const auto demos = std::span(spec.example_pool).first(spec.shots);
  for (const auto& d : demos) require_renderable(d);

  RenderedPrompt out;
  std::string& text = out.prompt_text;
  text = header_prefix(spec.header);
  switch (spec.format) {
    case PromptFormat::String:
      for (const auto& d : demos) text += d.question + " " + d.answer().text + "\n";
      text += instance.question;
      out.targets = choice_texts(instance);
      out.joiner = " ";
      break;
    case PromptFormat::StringAnswer:
      for (const auto& d : demos) text += string_answer_block(d) + d.answer().text + "\n###\n";
      text += string_answer_block(instance);
      out.targets = choice_texts(instance);
      break;
    case PromptFormat::Enumerated:
      for (const auto& d : demos) text += enumerated_block(d) + d.answer().label + "\n\n";
      text += enumerated_block(instance);
      out.targets = choice_labels(instance);
      break;
  }
  return out;
}

const std::optional<std::string>& HeaderSet::for_format(PromptFormat format) const {
  switch (format) {
    case PromptFormat::String: return string;
    case PromptFormat::StringAnswer: return string_answer;
    case PromptFormat::Enumerated: return enumerated;
  }
  return string;
}

RenderedPrompt ablation_context(const Instance& instance, AblationTag tag,
                                const HeaderSet& headers) {
  require_renderable(instance);
  RenderedPrompt out;
  out.ablation_tag = tag;
  out.targets = choice_texts(instance);
  switch (tag) {
    case AblationTag::None:
      break;
    case AblationTag::ChoicesEnum:
      out.prompt_text = header_prefix(headers.enumerated) + enumerated_choices(instance) + "Answer: ";
      break;
    case AblationTag::ChoicesString:
      out.prompt_text = header_prefix(headers.string_answer) + "answer choices: " +
                        choice_list(instance) + "\nThe correct answer is: ";
      break;
    case AblationTag::Question:
      out.prompt_text = header_prefix(headers.string) + instance.question;
      out.joiner = " ";
      break;
    case AblationTag::QuestionChoicesEnum:
      out.prompt_text = header_prefix(headers.enumerated) + enumerated_block(instance);
      break;
    case AblationTag::QuestionChoicesString:
      out.prompt_text = header_prefix(headers.string_answer) + string_answer_block(instance);
      break;
  }
  return out;
}

TargetSpacing parse_target_spacing(std::string_view name) {
  if (name == "verbatim") return TargetSpacing::Verbatim;
  if (name == "leading-space" || name == "leading_space") return TargetSpacing::LeadingSpace;
  throw ConfigError("unknown target spacing '" + std::string(name) + "'");
}

std::string_view target_spacing_name(TargetSpacing spacing) {
  return spacing == TargetSpacing::Verbatim ? "verbatim" : "leading-space";
}

ScoringPair scoring_pair(std::string_view prompt, std::string_view joiner,
                         std::string_view target, TargetSpacing spacing) {
  std::string context(prompt);
  context += joiner;
  if (spacing == TargetSpacing::Verbatim) return {std::move(context), std::string(target)};
  if (!context.empty() && context.back() == ' ') context.pop_back();
  return {std::move(context), " " + std::string(target)};
}

ScoringPair scoring_pair(const RenderedPrompt& rendered, std::size_t target,
                         TargetSpacing spacing) {
  if (target >= rendered.targets.size()) throw LookupError("target index out of range");
  return scoring_pair(rendered.prompt_text, rendered.joiner, rendered.targets[target], spacing);
}

HeaderSet TemplateConfig::headers_for(std::string_view dataset,
                                      const std::optional<std::string>& subject) const {
  const auto it = datasets_.find(dataset);
  if (it == datasets_.end()) return {};
  HeaderSet out = it->second;
  std::string readable = subject.value_or("");
  std::replace(readable.begin(), readable.end(), '_', ' ');
  for (auto* h : {&out.string, &out.string_answer, &out.enumerated}) {
    if (*h) replace_all(**h, "{subject}", readable);
  }
  return out;
}

}  // namespace sfc
