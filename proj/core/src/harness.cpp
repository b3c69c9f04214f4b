#include "sfc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "sfc/errors.hpp"

namespace sfc {
namespace {

struct Job {
  const Instance* instance = nullptr;
  std::uint64_t seed = 0;
  std::string prompt;
  std::string joiner;
  std::vector<std::string> targets;
  std::optional<std::vector<std::string>> prior_targets;
  std::string render_error;
};

// Deduplicating request builder: identical (prompt, continuation) pairs are
// sent once per batch.
class RequestTable {
 public:
  std::size_t add(const ScoringPair& pair) {
    const auto [it, inserted] = index_.try_emplace({pair.prompt, pair.continuation}, requests_.size());
    if (inserted) {
      ScoreRequest req;
      req.prompt_text = pair.prompt;
      req.continuation = pair.continuation;
      requests_.push_back(std::move(req));
    }
    return it->second;
  }
  const std::vector<ScoreRequest>& requests() const { return requests_; }

 private:
  std::map<std::pair<std::string, std::string>, std::size_t> index_;
  std::vector<ScoreRequest> requests_;
};

std::vector<InstanceResult> score_jobs(const std::vector<Job>& jobs, TargetSpacing spacing,
                                       bool want_class_masses, Gateway& gateway,
                                       std::vector<std::string>& notes) {
  RequestTable table;
  std::vector<std::vector<std::size_t>> cond_idx(jobs.size());
  std::vector<std::vector<std::size_t>> prior_idx(jobs.size());
  std::vector<std::vector<ScoringPair>> cond_pairs(jobs.size());
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const Job& job = jobs[j];
    if (!job.render_error.empty()) continue;
    for (const auto& t : job.targets) {
      cond_pairs[j].push_back(scoring_pair(job.prompt, job.joiner, t, spacing));
      cond_idx[j].push_back(table.add(cond_pairs[j].back()));
    }
    if (job.prior_targets) {
      for (const auto& t : *job.prior_targets) prior_idx[j].push_back(table.add(scoring_pair("", "", t, spacing)));
    }
  }

  const auto outcomes = gateway.batch_score(table.requests());

  bool masses_unavailable = false;
  std::vector<InstanceResult> out;
  out.reserve(jobs.size());
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const Job& job = jobs[j];
    InstanceResult r;
    r.id = job.instance->id;
    r.seed = job.seed;
    r.choices = job.instance->choices;
    const auto check = [&r](const ScoreOutcome& o) {
      if (o.ok()) return;
      r.failure = o.failure;
      throw BackendError(std::string(failure_kind_name(o.failure)) + ": " + o.error);
    };
    try {
      r.correct_index = job.instance->answer_index();
      if (!job.render_error.empty()) throw EscapingError(job.render_error);

      for (std::size_t i = 0; i < cond_idx[j].size(); ++i) {
        const auto& o = outcomes[cond_idx[j][i]];
        check(o);
        const ScoreResponse& resp = *o.response;
        r.probs.conditional.push_back(resp.continuation_logprob);
        const std::string token = resp.tokens.empty() ? cond_pairs[j][i].continuation : resp.tokens.front();
        r.first_tokens.push_back(token);
        if (resp.boundary_aligned && !resp.tokens.empty()) {
          r.probs.first_token_mass.try_emplace(token, std::exp(resp.token_logprobs.front()));
        } else {
          r.diagnostics.pmv_lower_bound = true;
        }
      }
      for (const auto& t : r.first_tokens) r.probs.first_token_mass.try_emplace(t, 0.0);

      if (job.prior_targets) {
        std::vector<double> prior;
        for (std::size_t idx : prior_idx[j]) {
          const auto& o = outcomes[idx];
          check(o);
          prior.push_back(o.response->continuation_logprob);
        }
        r.probs.prior = std::move(prior);
      }

      if (want_class_masses) {
        std::vector<std::string> conts;
        for (const auto& p : cond_pairs[j]) conts.push_back(p.continuation);
        // Every target shares one prompt.
        r.class_masses = gateway.class_masses(cond_pairs[j].front().prompt, conts);
        if (!r.class_masses) masses_unavailable = true;
      }
      recompute(r);
    } catch (const Error& e) {
      r.failed = true;
      if (r.failure == FailureKind::None) r.failure = FailureKind::Other;
      r.error = e.what();
    }
    out.push_back(std::move(r));
  }
  if (masses_unavailable) notes.push_back("SFC-free scoring unavailable: backend has no semantic classes");
  return out;
}

MetricStat make_stat(std::vector<double> per_seed) {
  MetricStat s;
  s.per_seed = std::move(per_seed);
  const double n = static_cast<double>(s.per_seed.size());
  if (s.per_seed.empty()) return s;
  s.mean = std::accumulate(s.per_seed.begin(), s.per_seed.end(), 0.0) / n;
  if (s.per_seed.size() >= 2) {
    double ss = 0.0;
    for (double v : s.per_seed) ss += (v - s.mean) * (v - s.mean);
    s.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

double percent(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den) * 100.0;
}

}  // namespace

PriorTarget parse_prior_target(std::string_view name) {
  if (name == "symbol") return PriorTarget::Symbol;
  if (name == "text") return PriorTarget::Text;
  throw ConfigError("unknown prior target '" + std::string(name) + "'");
}

std::string_view prior_target_name(PriorTarget target) {
  return target == PriorTarget::Symbol ? "symbol" : "text";
}

void recompute(InstanceResult& r) {
  const ChoiceSet choices(r.choices, r.correct_index, r.first_tokens);
  r.probs.validate();
  r.sequence = sequence_score(r.probs, choices);
  r.pmi.reset();
  if (r.probs.prior) r.pmi = pmi_dc_score(r.probs, choices);
  r.sfc_free.reset();
  if (r.class_masses) r.sfc_free = sfc_free_score(*r.class_masses, choices);
  r.pmv = pmv(r.probs);
  r.bound = check_bounds(r.probs, choices);
  r.diagnostics.clamped_priors = r.pmi ? r.pmi->clamped_priors : std::vector<std::size_t>{};
  r.diagnostics.shared_first_token = !r.bound.applicable;
}

RunSummary summarize(std::span<const InstanceResult> results, std::span<const std::uint64_t> seeds,
                     double max_failure_rate) {
  RunSummary s;
  s.n_seeds = seeds.size();
  std::vector<double> acc, pmi_acc, pmv_mean, bound_sat, sfc_acc;
  bool pmi_defined = true;
  bool sfc_defined = true;
  bool every_seed_scored = true;
  for (std::uint64_t seed : seeds) {
    std::size_t ok = 0, correct = 0, pmi_correct = 0, sfc_correct = 0, applicable = 0, holds = 0;
    std::vector<double> pmvs;
    for (const auto& r : results) {
      if (r.seed != seed) continue;
      ++s.instances;
      if (r.failed) {
        ++s.failures;
        continue;
      }
      ++ok;
      correct += r.sequence.is_correct;
      if (r.pmi) pmi_correct += r.pmi->is_correct; else pmi_defined = false;
      if (r.sfc_free) sfc_correct += r.sfc_free->is_correct; else sfc_defined = false;
      pmvs.push_back(r.pmv);
      if (r.bound.applicable) {
        ++applicable;
        holds += r.bound.tight_bound_holds;
      } else {
        ++s.bound_excluded;
      }
    }
    if (ok == 0) every_seed_scored = false;
    // Sorted so that the floating-point sum does not depend on result order.
    std::sort(pmvs.begin(), pmvs.end());
    const double pmv_sum = std::accumulate(pmvs.begin(), pmvs.end(), 0.0);
    acc.push_back(percent(correct, ok));
    pmi_acc.push_back(percent(pmi_correct, ok));
    sfc_acc.push_back(percent(sfc_correct, ok));
    pmv_mean.push_back(ok == 0 ? 0.0 : pmv_sum / static_cast<double>(ok) * 100.0);
    bound_sat.push_back(percent(holds, applicable));
  }
  const bool any_ok = s.instances > s.failures;
  s.accuracy = make_stat(std::move(acc));
  if (pmi_defined && any_ok) s.pmi_accuracy = make_stat(std::move(pmi_acc));
  if (sfc_defined && any_ok) s.sfc_free_accuracy = make_stat(std::move(sfc_acc));
  s.mean_pmv = make_stat(std::move(pmv_mean));
  s.bound_satisfaction = make_stat(std::move(bound_sat));

  const double failure_rate =
      s.instances == 0 ? 1.0 : static_cast<double>(s.failures) / static_cast<double>(s.instances);
  s.valid = s.instances > 0 && every_seed_scored && failure_rate <= max_failure_rate;
  if (s.instances == 0) s.notes.push_back("no instances");
  if (s.failures > 0) {
    s.notes.push_back(std::to_string(s.failures) + " of " + std::to_string(s.instances) +
                      " instance scorings failed and were excluded");
  }
  if (failure_rate > max_failure_rate && s.instances > 0) {
    s.notes.push_back("failure rate above the validity threshold");
  }
  if (s.bound_excluded > 0) {
    s.notes.push_back(std::to_string(s.bound_excluded) +
                      " instances excluded from bound satisfaction (shared first token)");
  }
  return s;
}

RunResult run_evaluation(const EvalConfig& config, std::span<const Instance> eval,
                         std::span<const Instance> pool, Gateway& gateway) {
  if (config.seeds.empty()) throw ConfigError("at least one seed is required");
  if (config.shots > kExamplePoolSize) {
    throw ConfigError("shots must be <= " + std::to_string(kExamplePoolSize));
  }
  RunResult run;
  run.key = {config.model_name, config.dataset, std::string(format_name(config.format)), config.shots,
             "main"};
  std::vector<std::string> notes;
  for (std::uint64_t seed : config.seeds) {
    PromptSpec spec;
    spec.format = config.format;
    spec.shots = config.shots;
    spec.seed = seed;
    if (config.shots > 0) spec.example_pool = select_examples(pool, seed, kExamplePoolSize);

    std::vector<Job> jobs;
    jobs.reserve(eval.size());
    for (const auto& inst : eval) {
      Job job;
      job.instance = &inst;
      job.seed = seed;
      spec.header = config.templates.headers_for(config.dataset, inst.subject).for_format(config.format);
      try {
        RenderedPrompt rendered = render(spec, inst);
        job.prompt = std::move(rendered.prompt_text);
        job.joiner = std::move(rendered.joiner);
        job.targets = std::move(rendered.targets);
        if (config.scoring.pmi) {
          if (config.format == PromptFormat::Enumerated && config.prior_target == PriorTarget::Text) {
            std::vector<std::string> texts;
            for (const auto& c : inst.choices) texts.push_back(c.text);
            job.prior_targets = std::move(texts);
          } else {
            job.prior_targets = job.targets;
          }
        }
      } catch (const Error& e) {
        job.render_error = e.what();
      }
      jobs.push_back(std::move(job));
    }
    auto results = score_jobs(jobs, config.spacing, config.scoring.sfc_free, gateway, notes);
    std::move(results.begin(), results.end(), std::back_inserter(run.results));
  }
  run.summary = summarize(run.results, config.seeds, config.max_failure_rate);
  std::sort(notes.begin(), notes.end());
  notes.erase(std::unique(notes.begin(), notes.end()), notes.end());
  run.summary.notes.insert(run.summary.notes.end(), notes.begin(), notes.end());
  return run;
}

std::vector<RunResult> run_ablation(const EvalConfig& config, std::span<const AblationTag> tags,
                                    std::span<const Instance> eval, Gateway& gateway) {
  if (config.seeds.empty()) throw ConfigError("at least one seed is required");
  const std::uint64_t seed = config.seeds.front();
  std::vector<RunResult> runs;
  for (AblationTag tag : tags) {
    RunResult run;
    run.key = {config.model_name, config.dataset, "ablation", 0, std::string(ablation_tag_name(tag))};
    std::vector<Job> jobs;
    for (const auto& inst : eval) {
      Job job;
      job.instance = &inst;
      job.seed = seed;
      try {
        RenderedPrompt ctx =
            ablation_context(inst, tag, config.templates.headers_for(config.dataset, inst.subject));
        job.prompt = std::move(ctx.prompt_text);
        job.joiner = std::move(ctx.joiner);
        job.targets = std::move(ctx.targets);
        if (config.scoring.pmi && tag != AblationTag::None) job.prior_targets = job.targets;
      } catch (const Error& e) {
        job.render_error = e.what();
      }
      jobs.push_back(std::move(job));
    }
    std::vector<std::string> notes;
    run.results = score_jobs(jobs, config.spacing, config.scoring.sfc_free, gateway, notes);
    const std::uint64_t seeds[] = {seed};
    run.summary = summarize(run.results, seeds, config.max_failure_rate);
    if (tag == AblationTag::None) run.summary.notes.push_back("PMI accuracy undefined for the empty context");
    std::sort(notes.begin(), notes.end());
    notes.erase(std::unique(notes.begin(), notes.end()), notes.end());
    run.summary.notes.insert(run.summary.notes.end(), notes.begin(), notes.end());
    runs.push_back(std::move(run));
  }
  return runs;
}

}  // namespace sfc
