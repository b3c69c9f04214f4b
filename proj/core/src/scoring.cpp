#include "sfc/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "sfc/errors.hpp"

namespace sfc {
namespace {

void validate_log_probs(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (!std::isfinite(v) || v > 0.0) {
      throw DomainError(std::string(what) + "[" + std::to_string(i) +
                        "] must be a finite log-probability <= 0, got " + std::to_string(v));
    }
  }
}

void require_matching(const ChoiceProbabilities& probs, const ChoiceSet& choices) {
  if (probs.conditional.size() != choices.size()) {
    throw StructuralError("conditional has " + std::to_string(probs.conditional.size()) +
                          " entries for " + std::to_string(choices.size()) + " choices");
  }
}

}  // namespace

ChoiceSet::ChoiceSet(std::vector<Choice> choices, std::size_t correct_index)
    : ChoiceSet(choices, correct_index, [&] {
        std::vector<std::string> tokens;
        tokens.reserve(choices.size());
        for (const auto& c : choices) tokens.push_back(c.text);
        return tokens;
      }()) {}

ChoiceSet::ChoiceSet(std::vector<Choice> choices, std::size_t correct_index,
                     std::vector<std::string> first_tokens)
    : choices_(std::move(choices)),
      correct_index_(correct_index),
      first_tokens_(std::move(first_tokens)) {
  if (choices_.size() < 2) throw StructuralError("a choice set needs at least 2 choices");
  if (correct_index_ >= choices_.size()) {
    throw StructuralError("correct_index " + std::to_string(correct_index_) + " out of range");
  }
  if (first_tokens_.size() != choices_.size()) {
    throw StructuralError("first_tokens must have one entry per choice");
  }
  std::set<std::string> labels;
  for (const auto& c : choices_) {
    if (c.text.empty()) throw StructuralError("choice text must be non-empty");
    if (!labels.insert(c.label).second) {
      throw StructuralError("duplicate choice label '" + c.label + "'");
    }
  }
}

void ChoiceProbabilities::validate() const {
  validate_log_probs(conditional, "conditional");
  if (prior) {
    if (prior->size() != conditional.size()) {
      throw StructuralError("prior and conditional lengths differ");
    }
    validate_log_probs(*prior, "prior");
  }
  double total = 0.0;
  for (const auto& [token, mass] : first_token_mass) {
    if (!(mass >= 0.0 && mass <= 1.0)) {
      throw DomainError("first-token mass for '" + token + "' outside [0, 1]");
    }
    total += mass;
  }
  if (total > 1.0 + kMassTolerance) throw DomainError("first-token masses sum above 1");
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw StructuralError("argmax of an empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Prediction sequence_score(const ChoiceProbabilities& probs, const ChoiceSet& choices) {
  require_matching(probs, choices);
  validate_log_probs(probs.conditional, "conditional");
  const std::size_t idx = argmax(probs.conditional);
  return {idx, idx == choices.correct_index()};
}

Prediction sfc_free_score(std::span<const double> class_masses, const ChoiceSet& choices) {
  if (class_masses.size() != choices.size()) {
    throw StructuralError("class_masses must have one entry per choice");
  }
  double total = 0.0;
  for (double m : class_masses) {
    if (!(m >= 0.0 && m <= 1.0)) throw DomainError("class mass outside [0, 1]");
    total += m;
  }
  if (total > 1.0 + kMassTolerance) throw DomainError("class masses sum above 1");
  const std::size_t idx = argmax(class_masses);
  return {idx, idx == choices.correct_index()};
}

PmiPrediction pmi_dc_score(const ChoiceProbabilities& probs, const ChoiceSet& choices) {
  require_matching(probs, choices);
  if (!probs.prior) throw PreconditionError("PMI scoring requires priors");
  validate_log_probs(probs.conditional, "conditional");
  if (probs.prior->size() != probs.conditional.size()) {
    throw StructuralError("prior and conditional lengths differ");
  }
  validate_log_probs(*probs.prior, "prior");

  static const double log_floor = std::log(kPriorFloor);
  PmiPrediction out;
  std::vector<double> ratio(probs.conditional.size());
  double scale = 1.0;
  for (std::size_t i = 0; i < ratio.size(); ++i) {
    double lp = (*probs.prior)[i];
    if (lp < log_floor) {
      lp = log_floor;
      out.clamped_priors.push_back(i);
    }
    ratio[i] = probs.conditional[i] - lp;
    scale = std::max({scale, std::abs(probs.conditional[i]), std::abs(lp)});
  }
  const double best = ratio[argmax(ratio)];
  const double tol = kPmiTieTolerance * scale;
  out.index = 0;
  while (ratio[out.index] < best - tol) ++out.index;
  out.is_correct = out.index == choices.correct_index();
  return out;
}

double pmv(const ChoiceProbabilities& probs) {
  if (probs.first_token_mass.empty()) {
    throw PreconditionError("PMV requires the first-token distribution");
  }
  double total = 0.0;
  for (const auto& [token, mass] : probs.first_token_mass) {
    if (!(mass >= 0.0 && mass <= 1.0)) {
      throw DomainError("first-token mass for '" + token + "' outside [0, 1]");
    }
    total += mass;
  }
  if (total > 1.0 + kMassTolerance) throw DomainError("first-token masses sum above 1");
  return std::min(total, 1.0);
}

double sfc_upper_bound(double pmv_value) {
  if (!(pmv_value >= 0.0 && pmv_value <= 1.0)) {
    throw DomainError("PMV must lie in [0, 1], got " + std::to_string(pmv_value));
  }
  return 1.0 - pmv_value;
}

BoundReport check_bounds(const ChoiceProbabilities& probs, const ChoiceSet& choices) {
  if (choices.size() < 2) throw StructuralError("bounds need at least 2 choices");
  require_matching(probs, choices);

  BoundReport report;
  report.pmv = pmv(probs);
  report.residual = 1.0 - report.pmv;

  std::vector<double> first(choices.size(), 0.0);
  for (std::size_t i = 0; i < choices.size(); ++i) {
    const auto it = probs.first_token_mass.find(choices.first_tokens()[i]);
    if (it != probs.first_token_mass.end()) first[i] = it->second;
  }

  report.top_index = argmax(first);
  std::size_t runner = report.top_index == 0 ? 1 : 0;
  for (std::size_t i = 0; i < first.size(); ++i) {
    if (i != report.top_index && first[i] > first[runner]) runner = i;
  }
  report.runner_up_index = runner;
  report.top_prob = first[report.top_index];
  report.runner_up_prob = first[runner];

  report.applicable =
      choices.first_tokens()[report.top_index] != choices.first_tokens()[runner];
  if (report.applicable) {
    report.tight_bound_holds = report.residual < report.top_prob - report.runner_up_prob;
    report.simple_bound_holds = report.top_prob > 1.0 - report.pmv / 2.0;
  }
  return report;
}

}  // namespace sfc
