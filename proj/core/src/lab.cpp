#include "sfc/lab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "sfc/errors.hpp"
#include "sfc/mix.hpp"

namespace sfc {

using nlohmann::json;

void SemanticClassSpec::validate(std::size_t vocab_size) const {
  if (classes.size() != valid_form_index.size()) {
    throw ValidationError("valid_form_index must have one entry per class");
  }
  std::vector<int> owner(vocab_size, -1);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c].empty()) throw ValidationError("class " + std::to_string(c) + " is empty");
    if (valid_form_index[c] >= classes[c].size()) {
      throw ValidationError("class " + std::to_string(c) + " does not contain its valid form");
    }
    for (std::size_t form : classes[c]) {
      if (form >= vocab_size) throw ValidationError("class member out of vocabulary range");
      if (owner[form] != -1) {
        throw ValidationError("form " + std::to_string(form) + " appears in two classes");
      }
      owner[form] = static_cast<int>(c);
    }
  }
  for (std::size_t form : distractor_forms) {
    if (form >= vocab_size) throw ValidationError("distractor out of vocabulary range");
    if (owner[form] != -1) {
      throw ValidationError("distractor " + std::to_string(form) + " is also a class member");
    }
    owner[form] = -2;
  }
  for (std::size_t f = 0; f < vocab_size; ++f) {
    if (owner[f] == -1) {
      throw ValidationError("form " + std::to_string(f) + " is neither a class member nor a distractor");
    }
  }
}

TabularLM::TabularLM(std::vector<std::string> contexts, std::vector<std::string> vocabulary,
                     std::vector<double> joint, SemanticClassSpec class_spec)
    : contexts_(std::move(contexts)),
      vocabulary_(std::move(vocabulary)),
      joint_(std::move(joint)),
      class_spec_(std::move(class_spec)) {
  if (contexts_.empty() || vocabulary_.empty()) {
    throw ValidationError("a tabular model needs at least one context and one form");
  }
  if (joint_.size() != contexts_.size() * vocabulary_.size()) {
    throw ValidationError("joint table must be contexts x vocabulary");
  }
  double total = 0.0;
  for (double p : joint_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("joint entries must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ValidationError("joint table sums to " + std::to_string(total) + ", expected 1");
  }
  for (std::size_t c = 0; c < contexts_.size(); ++c) {
    double row = 0.0;
    for (std::size_t f = 0; f < vocabulary_.size(); ++f) row += this->joint(c, f);
    if (row <= 0.0) throw ValidationError("context '" + contexts_[c] + "' has zero mass");
  }
  class_spec_.validate(vocabulary_.size());
}

std::optional<std::size_t> TabularLM::find_context(std::string_view name) const {
  const auto it = std::find(contexts_.begin(), contexts_.end(), name);
  if (it == contexts_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - contexts_.begin());
}

std::optional<std::size_t> TabularLM::find_form(std::string_view form) const {
  const auto it = std::find(vocabulary_.begin(), vocabulary_.end(), form);
  if (it == vocabulary_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - vocabulary_.begin());
}

std::vector<double> TabularLM::conditional_row(std::size_t context) const {
  if (context >= contexts_.size()) {
    throw LookupError("context index " + std::to_string(context) + " out of range");
  }
  std::vector<double> row(vocabulary_.size());
  double total = 0.0;
  for (std::size_t f = 0; f < row.size(); ++f) {
    row[f] = joint(context, f);
    total += row[f];
  }
  for (double& p : row) p /= total;
  return row;
}

std::vector<double> TabularLM::conditional_row(std::string_view context) const {
  const auto idx = find_context(context);
  if (!idx) throw LookupError("unknown context '" + std::string(context) + "'");
  return conditional_row(*idx);
}

std::vector<double> TabularLM::marginal() const {
  std::vector<double> prior(vocabulary_.size(), 0.0);
  for (std::size_t c = 0; c < contexts_.size(); ++c) {
    for (std::size_t f = 0; f < prior.size(); ++f) prior[f] += joint(c, f);
  }
  return prior;
}

std::vector<double> TabularLM::bayes_flip(std::size_t form) const {
  if (form >= vocabulary_.size()) throw LookupError("form index out of range");
  double total = 0.0;
  for (std::size_t c = 0; c < contexts_.size(); ++c) total += joint(c, form);
  if (total <= 0.0) {
    throw DomainError("form '" + vocabulary_[form] + "' has zero marginal probability");
  }
  std::vector<double> flip(contexts_.size());
  for (std::size_t c = 0; c < flip.size(); ++c) flip[c] = joint(c, form) / total;
  return flip;
}

std::vector<double> TabularLM::class_masses(std::size_t context) const {
  const auto row = conditional_row(context);
  std::vector<double> masses;
  masses.reserve(class_spec_.classes.size());
  for (const auto& members : class_spec_.classes) {
    double m = 0.0;
    for (std::size_t f : members) m += row[f];
    masses.push_back(m);
  }
  return masses;
}

TabularLM build_tabular_lm(const TabularConfig& cfg) {
  if (cfg.n_contexts == 0 || cfg.n_choices == 0 || cfg.synonyms_per_class == 0) {
    throw ConfigError("n_contexts, n_choices and synonyms_per_class must be >= 1");
  }
  if (cfg.n_choices > kMaxTabularVocabulary ||
      cfg.synonyms_per_class > kMaxTabularVocabulary ||
      cfg.n_choices * cfg.synonyms_per_class + cfg.n_distractors > kMaxTabularVocabulary) {
    throw ConfigError("tabular vocabulary limited to " + std::to_string(kMaxTabularVocabulary) +
                      " forms");
  }
  SplitMix64 rng(cfg.seed);

  std::vector<std::string> vocabulary;
  SemanticClassSpec spec;
  for (std::size_t c = 0; c < cfg.n_choices; ++c) {
    const std::size_t valid_pos = rng.below(cfg.synonyms_per_class);
    std::vector<std::size_t> members;
    std::size_t synonym = 0;
    for (std::size_t j = 0; j < cfg.synonyms_per_class; ++j) {
      members.push_back(vocabulary.size());
      if (j == valid_pos) {
        vocabulary.push_back("c" + std::to_string(c));
      } else {
        vocabulary.push_back("c" + std::to_string(c) + ".s" + std::to_string(synonym++));
      }
    }
    spec.classes.push_back(std::move(members));
    spec.valid_form_index.push_back(valid_pos);
  }
  for (std::size_t d = 0; d < cfg.n_distractors; ++d) {
    spec.distractor_forms.push_back(vocabulary.size());
    vocabulary.push_back("d" + std::to_string(d));
  }

  std::vector<std::string> contexts;
  for (std::size_t x = 0; x < cfg.n_contexts; ++x) contexts.push_back("x" + std::to_string(x));

  // Exponential weights give rows with a realistic spread of large and
  // small entries; the offset keeps every entry strictly positive.
  std::vector<double> joint(contexts.size() * vocabulary.size());
  double total = 0.0;
  for (double& w : joint) {
    w = -std::log1p(-rng.uniform()) + 1e-6;
    total += w;
  }
  for (double& w : joint) w /= total;

  return TabularLM(std::move(contexts), std::move(vocabulary), std::move(joint), std::move(spec));
}

std::string to_json(const TabularLM& lm) {
  json j;
  j["format"] = "sfc-tabular-lm";
  j["version"] = 1;
  j["contexts"] = lm.contexts();
  j["vocabulary"] = lm.vocabulary();
  json rows = json::array();
  for (std::size_t c = 0; c < lm.context_count(); ++c) {
    json row = json::array();
    for (std::size_t f = 0; f < lm.vocabulary_size(); ++f) row.push_back(lm.joint(c, f));
    rows.push_back(std::move(row));
  }
  j["joint"] = std::move(rows);
  j["classes"] = lm.class_spec().classes;
  j["valid_form_index"] = lm.class_spec().valid_form_index;
  j["distractor_forms"] = lm.class_spec().distractor_forms;
  return j.dump(1);
}

TabularLM tabular_lm_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("tabular-lm", 1, e.what());
  }
  try {
    if (j.at("format") != "sfc-tabular-lm") throw ValidationError("not an sfc-tabular-lm document");
    if (j.at("version").get<int>() != 1) throw ValidationError("unsupported tabular-lm version");
    auto contexts = j.at("contexts").get<std::vector<std::string>>();
    auto vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    std::vector<double> joint;
    const auto& rows = j.at("joint");
    if (rows.size() != contexts.size()) throw ValidationError("joint needs one row per context");
    for (const auto& row : rows) {
      if (row.size() != vocabulary.size()) throw ValidationError("joint row width != vocabulary");
      for (const auto& v : row) joint.push_back(v.get<double>());
    }
    SemanticClassSpec spec;
    spec.classes = j.at("classes").get<std::vector<std::vector<std::size_t>>>();
    spec.valid_form_index = j.at("valid_form_index").get<std::vector<std::size_t>>();
    spec.distractor_forms = j.value("distractor_forms", std::vector<std::size_t>{});
    return TabularLM(std::move(contexts), std::move(vocabulary), std::move(joint),
                     std::move(spec));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed tabular-lm document: ") + e.what());
  }
}

TabularLM load_tabular_lm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return tabular_lm_from_json(buf.str());
}

void save_tabular_lm(const TabularLM& lm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << to_json(lm) << '\n';
}

TabularLM worked_example_model(bool constrained) {
  std::vector<std::string> vocab = {"Puddle", "Whirlpool bath", "Bathtub", "Bath", "A puddle", "Spill"};
  std::vector<double> joint = constrained ? std::vector<double>{0.32, 0.52, 0.04, 0.04, 0.04, 0.04}
                                          : std::vector<double>{0.275, 0.1, 0.25, 0.25, 0.075, 0.05};
  SemanticClassSpec spec;
  spec.classes = {{0, 4, 5}, {1, 2, 3}};
  spec.valid_form_index = {0, 0};
  return TabularLM({"A human wants to submerge themselves in water. What should they use?"},
                   std::move(vocab), std::move(joint), std::move(spec));
}

std::uint64_t composition_count(std::uint64_t units, std::size_t n_classes) {
  if (n_classes == 0) return 0;
  // C(units + k, k) with k = n_classes - 1, built incrementally; each
  // intermediate is itself a binomial coefficient so the division is exact.
  // Saturates once an intermediate product would overflow.
  const std::uint64_t k = n_classes - 1;
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t acc = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    if (units + i < units || acc > kMax / (units + i)) return kMax;
    acc = acc * (units + i) / i;
  }
  return acc;
}

MassAssignmentEnumerator::MassAssignmentEnumerator(double residual, std::size_t n_classes,
                                                   double grid_step)
    : residual_(residual) {
  if (!(residual >= 0.0 && residual <= 1.0 + kMassTolerance)) {
    throw ConfigError("residual must lie in [0, 1]");
  }
  if (n_classes == 0) throw ConfigError("need at least one class");
  if (!(grid_step > 0.0 && grid_step <= 1.0)) throw ConfigError("grid_step must lie in (0, 1]");
  const double ratio = residual / grid_step;
  if (ratio > 1e9) throw ConfigError("grid too fine for residual");
  units_ = static_cast<std::uint64_t>(std::llround(ratio));
  if (residual > 0.0 && units_ == 0) units_ = 1;
  count_ = composition_count(units_, n_classes);
  if (count_ > kMaxMassAssignments) {
    throw ConfigError("enumeration would visit " + std::to_string(count_) +
                      " assignments (limit " + std::to_string(kMaxMassAssignments) +
                      "); use a coarser grid step");
  }
  parts_.assign(n_classes, 0);
  parts_[0] = units_;
}

bool MassAssignmentEnumerator::next(std::vector<double>& out) {
  if (done_) return false;
  if (started_) {
    const std::size_t n = parts_.size();
    std::size_t i = n >= 2 ? n - 2 : 0;
    bool found = false;
    if (n >= 2) {
      for (std::size_t j = n - 1; j-- > 0;) {
        if (parts_[j] > 0) {
          i = j;
          found = true;
          break;
        }
      }
    }
    if (!found) {
      done_ = true;
      return false;
    }
    const std::uint64_t tail = parts_[n - 1];
    parts_[i] -= 1;
    parts_[n - 1] = 0;
    parts_[i + 1] += tail + 1;
  }
  started_ = true;
  out.resize(parts_.size());
  for (std::size_t i = 0; i < parts_.size(); ++i) {
    out[i] = units_ == 0 ? 0.0
                         : residual_ * static_cast<double>(parts_[i]) / static_cast<double>(units_);
  }
  return true;
}

std::vector<std::vector<double>> enumerate_mass_assignments(double residual,
                                                            std::size_t n_classes,
                                                            double grid_step) {
  MassAssignmentEnumerator e(residual, n_classes, grid_step);
  std::vector<std::vector<double>> all;
  all.reserve(e.count());
  std::vector<double> a;
  while (e.next(a)) all.push_back(a);
  return all;
}

ChoiceProbabilities to_choice_probabilities(const BoundInstance& instance) {
  ChoiceProbabilities probs;
  for (std::size_t i = 0; i < instance.choice_probs.size(); ++i) {
    const double p = instance.choice_probs[i];
    if (!(p > 0.0 && p <= 1.0)) throw DomainError("choice probabilities must lie in (0, 1]");
    probs.conditional.push_back(std::log(p));
    probs.first_token_mass[std::to_string(i)] = p;
  }
  return probs;
}

ChoiceSet to_choice_set(const BoundInstance& instance) {
  std::vector<Choice> choices;
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < instance.choice_probs.size(); ++i) {
    choices.push_back({std::to_string(i), "choice " + std::to_string(i)});
    tokens.push_back(std::to_string(i));
  }
  return ChoiceSet(std::move(choices), 0, std::move(tokens));
}

BoundVerification verify_bound(const BoundInstance& instance, double grid_step) {
  const std::size_t n = instance.choice_probs.size();
  if (n < 2) throw StructuralError("bound verification needs at least 2 choices");
  const double total =
      std::accumulate(instance.choice_probs.begin(), instance.choice_probs.end(), 0.0);
  if (!(instance.residual >= 0.0) || std::abs(total + instance.residual - 1.0) > kMassTolerance) {
    throw DomainError("choice probabilities plus residual must sum to 1");
  }

  BoundVerification out;
  out.report = check_bounds(to_choice_probabilities(instance), to_choice_set(instance));
  // Enumerate the residual exactly as the bound saw it so that the check
  // and the adversary share one arithmetic.
  const double residual = out.report.residual;
  const std::size_t predicted = argmax(instance.choice_probs);

  MassAssignmentEnumerator grid(std::max(residual, 0.0), n, grid_step);
  std::vector<double> assignment;
  std::vector<double> masses(n);
  while (grid.next(assignment)) {
    ++out.assignments_checked;
    for (std::size_t i = 0; i < n; ++i) masses[i] = instance.choice_probs[i] + assignment[i];
    if (argmax(masses) != predicted) {
      if (out.sound && out.report.tight_bound_holds) out.counterexample = assignment;
      out.sound = false;
    }
  }

  if (!out.report.tight_bound_holds) {
    const std::size_t top = out.report.top_index;
    const std::size_t runner = out.report.runner_up_index;
    std::vector<double> adversary(n, 0.0);
    adversary[runner] = residual;
    if (instance.choice_probs[runner] + residual >= instance.choice_probs[top]) {
      out.counterexample = std::move(adversary);
    }
  }
  return out;
}

std::string to_json(const BoundVerification& v) {
  json j;
  j["format"] = "sfc-bound-verification";
  j["version"] = 1;
  j["pmv"] = v.report.pmv;
  j["residual"] = v.report.residual;
  j["top_index"] = v.report.top_index;
  j["runner_up_index"] = v.report.runner_up_index;
  j["top_prob"] = v.report.top_prob;
  j["runner_up_prob"] = v.report.runner_up_prob;
  j["tight_bound_holds"] = v.report.tight_bound_holds;
  j["simple_bound_holds"] = v.report.simple_bound_holds;
  j["sound"] = v.sound;
  j["assignments_checked"] = v.assignments_checked;
  j["counterexample"] = v.counterexample ? json(*v.counterexample) : json(nullptr);
  return j.dump();
}

}  // namespace sfc
