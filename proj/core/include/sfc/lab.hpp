#pragma once

// Desk-scale language model with explicit semantic equivalence classes, and
// the brute-force machinery used to check the scoring rules against it.
//
// A TabularLM is a joint table P(context, form) over a handful of contexts
// and at most 64 surface forms. Each valid answer choice owns a class of
// synonymous forms; forms outside every class are distractors.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sfc/scoring.hpp"

namespace sfc {

inline constexpr std::size_t kMaxTabularVocabulary = 64;
inline constexpr std::uint64_t kMaxMassAssignments = 1'000'000;

struct SemanticClassSpec {
  // classes[c] lists vocabulary indices of the forms synonymous with choice c.
  std::vector<std::vector<std::size_t>> classes;
  // Position of the valid surface form of choice c inside classes[c].
  std::vector<std::size_t> valid_form_index;
  // Vocabulary indices outside every class.
  std::vector<std::size_t> distractor_forms;

  std::size_t choice_count() const { return classes.size(); }
  std::size_t valid_form(std::size_t choice) const {
    return classes.at(choice).at(valid_form_index.at(choice));
  }
  // Throws ValidationError unless classes are non-empty, pairwise disjoint,
  // and together with the distractors partition [0, vocab_size).
  void validate(std::size_t vocab_size) const;
};

struct TabularConfig {
  std::size_t n_contexts = 1;
  std::size_t n_choices = 2;
  std::size_t synonyms_per_class = 1;
  std::size_t n_distractors = 0;
  std::uint64_t seed = 0;
};

class TabularLM {
 public:
  TabularLM(std::vector<std::string> contexts, std::vector<std::string> vocabulary,
            std::vector<double> joint, SemanticClassSpec class_spec);

  std::size_t context_count() const { return contexts_.size(); }
  std::size_t vocabulary_size() const { return vocabulary_.size(); }
  const std::vector<std::string>& contexts() const { return contexts_; }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const SemanticClassSpec& class_spec() const { return class_spec_; }

  // Row-major [context][form].
  std::span<const double> joint() const { return joint_; }
  double joint(std::size_t context, std::size_t form) const {
    return joint_[context * vocabulary_.size() + form];
  }

  std::optional<std::size_t> find_context(std::string_view name) const;
  std::optional<std::size_t> find_form(std::string_view form) const;

  // P(form | context). Throws LookupError for an unknown context.
  std::vector<double> conditional_row(std::size_t context) const;
  std::vector<double> conditional_row(std::string_view context) const;

  // P(form) = sum over contexts of the joint.
  std::vector<double> marginal() const;

  // P(context | form). Throws DomainError when the form has zero mass.
  std::vector<double> bayes_flip(std::size_t form) const;

  // Semantic-class masses sum_{z in class c} P(z | context), one per choice.
  std::vector<double> class_masses(std::size_t context) const;

 private:
  std::vector<std::string> contexts_;
  std::vector<std::string> vocabulary_;
  std::vector<double> joint_;
  SemanticClassSpec class_spec_;
};

// Deterministic in cfg.seed. Throws ConfigError when a count is zero or the
// vocabulary would exceed kMaxTabularVocabulary.
TabularLM build_tabular_lm(const TabularConfig& cfg);

// The two-choice bath/puddle illustration: one context, choices "Puddle" and
// "Whirlpool bath" (correct, index 1), three surface forms per class. The
// unconstrained table lets "Puddle" win on its own form while the bath class
// holds more mass; the constrained one concentrates mass on the valid forms.
TabularLM worked_example_model(bool constrained);
inline constexpr std::size_t kWorkedExampleCorrect = 1;

// Structured-text (JSON) form documented in docs/formats.md.
std::string to_json(const TabularLM& lm);
TabularLM tabular_lm_from_json(std::string_view text);
TabularLM load_tabular_lm(const std::string& path);
void save_tabular_lm(const TabularLM& lm, const std::string& path);

// Every way of splitting `residual` into n non-negative parts on a grid.
//
// The grid has u = round(residual / step) units (at least 1 when residual is
// positive); part i equals residual * k_i / u, so parts always sum to the
// residual and the all-to-one-class vertices are always present.
class MassAssignmentEnumerator {
 public:
  MassAssignmentEnumerator(double residual, std::size_t n_classes, double grid_step);

  std::uint64_t count() const { return count_; }
  std::uint64_t units() const { return units_; }

  // Writes the next assignment into `out`; false once exhausted.
  bool next(std::vector<double>& out);

 private:
  double residual_;
  std::uint64_t units_;
  std::uint64_t count_;
  std::vector<std::uint64_t> parts_;
  bool started_ = false;
  bool done_ = false;
};

std::vector<std::vector<double>> enumerate_mass_assignments(double residual,
                                                            std::size_t n_classes,
                                                            double grid_step);

// C(n + k - 1, k - 1); saturates at UINT64_MAX.
std::uint64_t composition_count(std::uint64_t units, std::size_t n_classes);

struct BoundInstance {
  // Linear P(choice | x), one per choice. Their sum is the PMV.
  std::vector<double> choice_probs;
  // Mass outside the valid choices, normally 1 - sum(choice_probs).
  double residual = 0.0;
};

struct BoundVerification {
  BoundReport report;
  // True when no enumerated residual assignment moves the class argmax off
  // the sequence argmax.
  bool sound = true;
  // When the tight bound fails: the all-residual-to-runner-up assignment,
  // which lifts the runner-up class to at least the top class. When it
  // holds: the first assignment that changed the argmax, if any.
  std::optional<std::vector<double>> counterexample;
  std::uint64_t assignments_checked = 0;
};

// Builds the ChoiceSet / ChoiceProbabilities view of an instance where every
// choice is its own first token.
ChoiceProbabilities to_choice_probabilities(const BoundInstance& instance);
ChoiceSet to_choice_set(const BoundInstance& instance);

BoundVerification verify_bound(const BoundInstance& instance, double grid_step = 0.01);

std::string to_json(const BoundVerification& verification);

}  // namespace sfc
