#pragma once

// Multiple-choice scoring rules over per-choice model probabilities.
//
// All ranking happens in the log domain. Linear probabilities appear only in
// the attentiveness metric (probability mass on valid choices, "PMV") and in
// the two impact bounds, which are statements about probability mass.
//
// Every argmax in this header breaks ties toward the lowest choice index.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sfc {

// Priors below this (linear) probability are clamped before the PMI ratio.
inline constexpr double kPriorFloor = 1e-12;

// PMI ratios closer than this (relative to the largest log-probability
// involved) are ties, so that rounding in the subtraction cannot break them.
inline constexpr double kPmiTieTolerance = 1e-12;

// Slack allowed on "sums to at most one" checks.
inline constexpr double kMassTolerance = 1e-9;

struct Choice {
  std::string label;
  std::string text;

  friend bool operator==(const Choice&, const Choice&) = default;
};

// The valid answer choices for one instance, the gold index, and the first
// token each choice begins with under the active tokenizer. First tokens may
// repeat across choices.
class ChoiceSet {
 public:
  // Uses each choice's text as its first token.
  ChoiceSet(std::vector<Choice> choices, std::size_t correct_index);
  ChoiceSet(std::vector<Choice> choices, std::size_t correct_index,
            std::vector<std::string> first_tokens);

  std::size_t size() const { return choices_.size(); }
  const std::vector<Choice>& choices() const { return choices_; }
  const Choice& operator[](std::size_t i) const { return choices_[i]; }
  std::size_t correct_index() const { return correct_index_; }
  const std::vector<std::string>& first_tokens() const { return first_tokens_; }

 private:
  std::vector<Choice> choices_;
  std::size_t correct_index_;
  std::vector<std::string> first_tokens_;
};

struct ChoiceProbabilities {
  // log P(choice | x), one per choice.
  std::vector<double> conditional;
  // log P(choice) under the empty context, one per choice.
  std::optional<std::vector<double>> prior;
  // P(token | x) for each unique first token of the choices (linear).
  std::map<std::string, double> first_token_mass;

  // Throws DomainError on non-finite / positive log-probabilities or masses
  // outside [0, 1]; StructuralError when prior and conditional lengths differ.
  void validate() const;
};

struct Prediction {
  std::size_t index = 0;
  bool is_correct = false;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct PmiPrediction {
  std::size_t index = 0;
  bool is_correct = false;
  // Choice indices whose prior fell below kPriorFloor and was clamped.
  std::vector<std::size_t> clamped_priors;
};

struct BoundReport {
  double pmv = 0.0;
  double residual = 1.0;
  double top_prob = 0.0;
  double runner_up_prob = 0.0;
  std::size_t top_index = 0;
  std::size_t runner_up_index = 0;
  // False when the top two choices share a first token: their first-token
  // gap is then zero by construction and says nothing about the choices.
  bool applicable = true;
  // residual < top_prob - runner_up_prob
  bool tight_bound_holds = false;
  // top_prob > 1 - pmv / 2
  bool simple_bound_holds = false;
};

// Index of the largest value; lowest index on ties. Requires non-empty input.
std::size_t argmax(std::span<const double> values);

// argmax_i log P(choice_i | x).
Prediction sequence_score(const ChoiceProbabilities& probs, const ChoiceSet& choices);

// argmax over semantic-class masses sum_{z in class_i} P(z | x).
Prediction sfc_free_score(std::span<const double> class_masses, const ChoiceSet& choices);

// argmax_i log P(choice_i | x) - log max(P(choice_i), kPriorFloor); ratios
// within kPmiTieTolerance of the best go to the lowest index.
PmiPrediction pmi_dc_score(const ChoiceProbabilities& probs, const ChoiceSet& choices);

// Sum of first_token_mass over its (unique) tokens, capped at 1.
double pmv(const ChoiceProbabilities& probs);

// 1 - pmv: an upper bound on the mass lost to surface form competition.
double sfc_upper_bound(double pmv_value);

// Evaluates both impact bounds in first-token probability space.
BoundReport check_bounds(const ChoiceProbabilities& probs, const ChoiceSet& choices);

}  // namespace sfc
