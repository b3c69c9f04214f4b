#pragma once

// End-to-end evaluation: render prompts, score every choice through the
// gateway, apply every scoring rule side by side, and aggregate per seed and
// across seeds.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfc/backend.hpp"
#include "sfc/instance.hpp"
#include "sfc/prompt.hpp"
#include "sfc/scoring.hpp"

namespace sfc {

struct ScoringSet {
  bool pmi = true;
  // Needs a backend that knows its semantic classes (TabularBackend).
  bool sfc_free = false;
};

// What the PMI denominator scores for enumerated prompts: the symbol that is
// the continuation (default) or the choice text.
enum class PriorTarget { Symbol, Text };

PriorTarget parse_prior_target(std::string_view name);
std::string_view prior_target_name(PriorTarget target);

struct EvalConfig {
  std::string model_name = "model";
  // Dataset key: selects headers from `templates` and labels report rows.
  std::string dataset = "dataset";
  PromptFormat format = PromptFormat::String;
  std::size_t shots = 0;
  std::vector<std::uint64_t> seeds = {0};
  ScoringSet scoring;
  PriorTarget prior_target = PriorTarget::Symbol;
  TargetSpacing spacing = TargetSpacing::Verbatim;
  TemplateConfig templates = TemplateConfig::defaults();
  // Runs with a larger share of failed instances are marked invalid.
  double max_failure_rate = 0.01;
};

struct InstanceDiagnostics {
  std::vector<std::size_t> clamped_priors;
  // Some choice's first-token mass could not be measured exactly and was
  // counted as 0, so the stored PMV understates the true value.
  bool pmv_lower_bound = false;
  // The top two choices share a first token; the bound check is skipped.
  bool shared_first_token = false;
};

struct InstanceResult {
  std::string id;
  std::uint64_t seed = 0;
  bool failed = false;
  FailureKind failure = FailureKind::None;
  std::string error;

  std::vector<Choice> choices;
  std::size_t correct_index = 0;
  std::vector<std::string> first_tokens;
  ChoiceProbabilities probs;
  std::optional<std::vector<double>> class_masses;

  double pmv = 0.0;
  Prediction sequence;
  std::optional<PmiPrediction> pmi;
  std::optional<Prediction> sfc_free;
  BoundReport bound;
  InstanceDiagnostics diagnostics;
};

// Re-derives pmv, predictions, bounds and diagnostics from the stored
// probabilities. Used for report regeneration and consistency checks.
void recompute(InstanceResult& result);

struct MetricStat {
  std::vector<double> per_seed;
  double mean = 0.0;
  // Sample standard deviation of per_seed over sqrt(n); absent for one seed.
  std::optional<double> std_error;
};

struct RunSummary {
  MetricStat accuracy;
  std::optional<MetricStat> pmi_accuracy;
  MetricStat mean_pmv;
  MetricStat bound_satisfaction;
  std::optional<MetricStat> sfc_free_accuracy;
  std::size_t n_seeds = 0;
  std::size_t instances = 0;        // attempted, summed over seeds
  std::size_t failures = 0;         // summed over seeds
  std::size_t bound_excluded = 0;   // shared-first-token instances, summed over seeds
  bool valid = false;
  std::vector<std::string> notes;
};

// Aggregates results grouped by seed. `seeds` fixes which seeds are expected;
// a seed with no surviving results contributes zeros and invalidates the run.
RunSummary summarize(std::span<const InstanceResult> results, std::span<const std::uint64_t> seeds,
                     double max_failure_rate = 0.01);

struct RunKey {
  std::string model;
  std::string dataset;
  std::string format;
  std::size_t shots = 0;
  // "main" for ordinary runs, otherwise an ablation tag name.
  std::string tag = "main";

  friend bool operator==(const RunKey&, const RunKey&) = default;
  friend auto operator<=>(const RunKey&, const RunKey&) = default;
};

struct RunResult {
  RunKey key;
  std::vector<InstanceResult> results;
  RunSummary summary;
};

RunResult run_evaluation(const EvalConfig& config, std::span<const Instance> eval,
                         std::span<const Instance> pool, Gateway& gateway);

// One run per tag over the same instances, zero-shot. Targets are always the
// choice texts so that every tag scores the same continuations; tag "none"
// has no PMI accuracy.
std::vector<RunResult> run_ablation(const EvalConfig& config, std::span<const AblationTag> tags,
                                    std::span<const Instance> eval, Gateway& gateway);

}  // namespace sfc
