#include <cmath>
#include <cstdio>
#include <ostream>

#include "cli.hpp"
#include "sfc/errors.hpp"
#include "sfc/lab.hpp"
#include "sfc/mix.hpp"
#include "sfc/scoring.hpp"

namespace sfc::cli {
namespace {

BoundInstance draw_instance(SplitMix64& rng, std::size_t max_choices, bool residual_zero) {
  const std::size_t n = 2 + static_cast<std::size_t>(rng.below(max_choices - 1));
  std::vector<double> w(n + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = (i == n && residual_zero) ? 0.0 : -std::log1p(-rng.uniform()) + 1e-9;
    total += w[i];
  }
  BoundInstance inst;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    inst.choice_probs.push_back(w[i] / total);
    sum += inst.choice_probs.back();
  }
  inst.residual = residual_zero ? 0.0 : std::max(0.0, 1.0 - sum);
  return inst;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

SimulateStats simulate_bounds(const SimulateOptions& options) {
  if (options.max_choices < 2) throw ConfigError("--max-choices must be >= 2");
  SimulateStats stats;
  SplitMix64 rng(options.seed);
  for (std::size_t i = 0; i < options.instances; ++i) {
    const BoundInstance inst = draw_instance(rng, options.max_choices, options.residual_zero);
    const BoundVerification v = verify_bound(inst, options.step);
    ++stats.instances;
    stats.assignments_checked += v.assignments_checked;
    if (v.report.simple_bound_holds) ++stats.simple_holds;
    if (v.report.tight_bound_holds) {
      ++stats.tight_holds;
      if (!v.sound) ++stats.soundness_violations;
    } else {
      ++stats.tight_fails;
      if (v.counterexample) ++stats.completeness_hits;
    }
  }
  return stats;
}

void print_simulation(const SimulateStats& s, std::ostream& out) {
  out << "instances              " << s.instances << '\n'
      << "tight bound holds      " << s.tight_holds << '\n'
      << "simple bound holds     " << s.simple_holds << '\n'
      << "soundness violations   " << s.soundness_violations << '\n'
      << "tight bound fails      " << s.tight_fails << '\n'
      << "  runner-up flip/tie   " << s.completeness_hits << " of " << s.tight_fails << '\n'
      << "assignments checked    " << s.assignments_checked << '\n';
}

void print_worked_example(std::ostream& out) {
  for (bool constrained : {false, true}) {
    const TabularLM lm = worked_example_model(constrained);
    const auto row = lm.conditional_row(std::size_t{0});
    const auto masses = lm.class_masses(0);
    const auto& spec = lm.class_spec();

    std::vector<Choice> choices;
    ChoiceProbabilities probs;
    std::vector<std::string> tokens;
    for (std::size_t c = 0; c < spec.choice_count(); ++c) {
      const std::size_t form = spec.valid_form(c);
      const std::string& text = lm.vocabulary()[form];
      choices.push_back({std::string(1, static_cast<char>('A' + c)), text});
      tokens.push_back(text);
      probs.conditional.push_back(std::log(row[form]));
      probs.first_token_mass[text] = row[form];
    }
    const ChoiceSet set(choices, kWorkedExampleCorrect, tokens);
    const Prediction seq = sequence_score(probs, set);
    const Prediction free = sfc_free_score(masses, set);
    const BoundReport b = check_bounds(probs, set);

    out << (constrained ? "constrained" : "unconstrained") << '\n'
        << "  pmv                  " << fixed(b.pmv) << '\n'
        << "  sequence prediction  " << choices[seq.index].text << (seq.is_correct ? " (correct)" : " (incorrect)")
        << '\n'
        << "  class masses         ";
    for (std::size_t c = 0; c < masses.size(); ++c) {
      out << (c ? ", " : "") << choices[c].text << ' ' << fixed(masses[c]);
    }
    out << '\n'
        << "  sfc-free prediction  " << choices[free.index].text
        << (free.is_correct ? " (correct)" : " (incorrect)") << '\n'
        << "  residual vs gap      " << fixed(b.residual) << " vs " << fixed(b.top_prob - b.runner_up_prob)
        << '\n'
        << "  tight bound          " << (b.tight_bound_holds ? "holds" : "fails") << '\n'
        << "  simple bound         " << (b.simple_bound_holds ? "holds" : "fails") << " ("
        << fixed(b.top_prob) << " vs " << fixed(1.0 - b.pmv / 2.0) << ")\n"
        << "  verdict              " << (b.tight_bound_holds ? "certified safe" : "vulnerable") << '\n';
  }
}

}  // namespace sfc::cli
