#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sfc/backend.hpp"
#include "sfc/dataset.hpp"
#include "sfc/errors.hpp"
#include "sfc/harness.hpp"
#include "sfc/lab.hpp"
#include "sfc/prompt.hpp"
#include "sfc/report.hpp"

namespace sfc::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Bad flags or config values; mapped to kExitUsage.
class UsageError : public Error {
 public:
  using Error::Error;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path + ": " + e.what());
  }
}

// Flags shared by evaluate and ablate. Each one, when given, overrides the
// matching key of the config file.
struct RunFlags {
  std::string config;
  std::string backend;
  std::string model_file;
  std::string model_name;
  std::string dataset;
  std::string profile;
  std::string dataset_name;
  std::string format;
  std::vector<std::size_t> shots;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> tags;
  bool no_pmi = false;
  bool sfc_free = false;
  std::string prior_target;
  std::string spacing;
  std::string templates;
  std::size_t parallelism = 1;
  double rate_limit = 0.0;
  std::string cache;
  double max_failure_rate = 0.01;
  bool no_count_check = false;
  std::string out;

  std::map<std::string, CLI::Option*> opts;
};

void add_run_flags(CLI::App* sub, RunFlags& f, bool ablate) {
  auto& o = f.opts;
  o["config"] = sub->add_option("--config", f.config, "JSON run config; flags override its keys");
  o["backend"] = sub->add_option("--backend", f.backend, "tabular or remote")
                     ->check(CLI::IsMember({"tabular", "remote"}));
  o["model_file"] = sub->add_option("--model-file", f.model_file,
                                    "TabularLM JSON (default: <dataset>/model.json)");
  o["model_name"] = sub->add_option("--model-name", f.model_name, "Label for report rows");
  o["dataset"] = sub->add_option("--dataset", f.dataset, "Dataset directory");
  o["profile"] = sub->add_option("--profile", f.profile,
                                 "openbookqa, commonsenseqa, mmlu or canonical (default)");
  o["dataset_name"] = sub->add_option("--dataset-name", f.dataset_name,
                                      "Header set and report label (default: profile or directory name)");
  if (!ablate) {
    o["format"] = sub->add_option("--format", f.format, "string, string_answer or enumerated");
    o["shots"] = sub->add_option("--shots", f.shots, "One or more shot counts (standard grid 0 1 2 4 8)");
  } else {
    o["tags"] = sub->add_option("--tags", f.tags, "Ablation contexts (default: all six)");
  }
  o["seeds"] = sub->add_option("--seeds", f.seeds, "Demonstration seeds (default: 0)");
  o["no_pmi"] = sub->add_flag("--no-pmi", f.no_pmi, "Skip PMI scoring and its prior requests");
  o["sfc_free"] = sub->add_flag("--sfc-free", f.sfc_free, "Also score by semantic-class mass (tabular only)");
  o["prior_target"] = sub->add_option("--prior-target", f.prior_target,
                                      "Enumerated PMI denominator target: symbol or text");
  o["spacing"] = sub->add_option("--spacing", f.spacing, "Target spacing: verbatim or leading-space");
  o["templates"] = sub->add_option("--templates", f.templates, "Header template JSON file");
  o["parallelism"] = sub->add_option("--parallelism", f.parallelism, "Concurrent backend requests")
                         ->check(CLI::PositiveNumber);
  o["rate_limit"] = sub->add_option("--rate-limit", f.rate_limit, "Requests per second (0 = unlimited)");
  o["cache"] = sub->add_option("--cache", f.cache, "Append-only response cache file");
  o["max_failure_rate"] = sub->add_option("--max-failure-rate", f.max_failure_rate,
                                          "Failed-instance share above which a run is invalid");
  o["no_count_check"] = sub->add_flag("--no-count-check", f.no_count_check,
                                      "Accept evaluation splits of non-standard size");
  o["out"] = sub->add_option("--out", f.out, "Output directory (default: sfc-out)");
}

bool given(const RunFlags& f, const std::string& name) {
  const auto it = f.opts.find(name);
  return it != f.opts.end() && it->second->count() > 0;
}

json effective_config(const RunFlags& f) {
  json c = f.config.empty() ? json::object() : read_json_file(f.config);
  if (!c.is_object()) throw UsageError("config must be a JSON object");
  auto set = [&](const std::string& flag, const json::json_pointer& ptr, const json& value) {
    if (given(f, flag)) c[ptr] = value;
  };
  set("backend", "/backend/kind"_json_pointer, f.backend);
  set("model_file", "/backend/model_file"_json_pointer, f.model_file);
  set("model_name", "/model_name"_json_pointer, f.model_name);
  set("dataset", "/dataset/path"_json_pointer, f.dataset);
  set("profile", "/dataset/profile"_json_pointer, f.profile);
  set("dataset_name", "/dataset/name"_json_pointer, f.dataset_name);
  set("no_count_check", "/dataset/enforce_counts"_json_pointer, !f.no_count_check);
  set("format", "/format"_json_pointer, f.format);
  set("shots", "/shots"_json_pointer, f.shots);
  set("seeds", "/seeds"_json_pointer, f.seeds);
  set("tags", "/tags"_json_pointer, f.tags);
  set("no_pmi", "/scoring/pmi"_json_pointer, !f.no_pmi);
  set("sfc_free", "/scoring/sfc_free"_json_pointer, f.sfc_free);
  set("prior_target", "/prior_target"_json_pointer, f.prior_target);
  set("spacing", "/spacing"_json_pointer, f.spacing);
  set("templates", "/templates"_json_pointer, f.templates);
  set("parallelism", "/gateway/parallelism"_json_pointer, f.parallelism);
  set("rate_limit", "/gateway/rate_limit"_json_pointer, f.rate_limit);
  set("cache", "/gateway/cache"_json_pointer, f.cache);
  set("max_failure_rate", "/max_failure_rate"_json_pointer, f.max_failure_rate);
  set("out", "/out"_json_pointer, f.out);
  return c;
}

template <typename T>
T get_or(const json& c, const char* ptr, T fallback) {
  const json::json_pointer p(ptr);
  if (!c.contains(p) || c.at(p).is_null()) return fallback;
  try {
    return c.at(p).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config key ") + ptr + ": " + e.what());
  }
}

struct LoadedData {
  std::string name;
  std::vector<Instance> eval;
  std::vector<Instance> pool;
};

LoadedData load_data(const json& c, bool need_pool) {
  const auto path = get_or<std::string>(c, "/dataset/path", "");
  if (path.empty()) throw UsageError("no dataset given (--dataset)");
  if (!fs::is_directory(path)) throw UsageError("dataset directory not found: " + path);
  const DatasetProfile profile = parse_profile(get_or<std::string>(c, "/dataset/profile", "canonical"));
  LoadOptions opts;
  opts.enforce_counts = get_or<bool>(c, "/dataset/enforce_counts", true);
  LoadedData d;
  d.name = get_or<std::string>(c, "/dataset/name", "");
  if (d.name.empty()) {
    d.name = profile == DatasetProfile::Canonical ? fs::path(path).lexically_normal().filename().string()
                                                  : std::string(profile_name(profile));
    if (d.name.empty()) d.name = fs::path(path).lexically_normal().parent_path().filename().string();
  }
  d.eval = load_dataset(profile, path, opts);
  if (need_pool) d.pool = training_pool(profile, path, opts);
  return d;
}

std::shared_ptr<Backend> make_backend(const json& c) {
  const auto kind = get_or<std::string>(c, "/backend/kind", "tabular");
  if (kind == "tabular") {
    std::string file = get_or<std::string>(c, "/backend/model_file", "");
    if (file.empty()) file = (fs::path(get_or<std::string>(c, "/dataset/path", ".")) / "model.json").string();
    if (!fs::is_regular_file(file)) throw UsageError("tabular model not found: " + file);
    return std::make_shared<TabularBackend>(load_tabular_lm(file));
  }
  if (kind == "remote") {
    RemoteConfig rc = RemoteConfig::from_env();
    rc.base_url = get_or<std::string>(c, "/backend/base_url", rc.base_url);
    rc.model = get_or<std::string>(c, "/backend/model", rc.model);
    rc.top_logprobs = get_or<int>(c, "/backend/top_logprobs", rc.top_logprobs);
    rc.max_tokens = get_or<int>(c, "/backend/max_tokens", rc.max_tokens);
    if (rc.base_url.empty()) throw UsageError("remote backend needs SFC_API_BASE or backend.base_url");
    return std::make_shared<RemoteBackend>(std::move(rc));
  }
  throw UsageError("unknown backend '" + kind + "'");
}

GatewayOptions gateway_options(const json& c) {
  GatewayOptions g;
  g.parallelism = get_or<std::size_t>(c, "/gateway/parallelism", 1);
  if (g.parallelism == 0) throw UsageError("parallelism must be >= 1");
  g.rate_limit_per_second = get_or<double>(c, "/gateway/rate_limit", 0.0);
  g.rate_burst = get_or<double>(c, "/gateway/rate_burst", 1.0);
  const auto cache = get_or<std::string>(c, "/gateway/cache", "");
  if (!cache.empty()) g.cache_path = cache;
  return g;
}

EvalConfig eval_config(const json& c, const std::string& dataset_name) {
  EvalConfig e;
  e.model_name = get_or<std::string>(c, "/model_name", "");
  if (e.model_name.empty()) {
    e.model_name = get_or<std::string>(c, "/backend/kind", "tabular") == "remote"
                       ? get_or<std::string>(c, "/backend/model", RemoteConfig::from_env().model)
                       : "tabular";
  }
  e.dataset = dataset_name;
  e.format = parse_format(get_or<std::string>(c, "/format", "string"));
  e.seeds = get_or<std::vector<std::uint64_t>>(c, "/seeds", {0});
  if (e.seeds.empty()) throw UsageError("at least one seed is required");
  e.scoring.pmi = get_or<bool>(c, "/scoring/pmi", true);
  e.scoring.sfc_free = get_or<bool>(c, "/scoring/sfc_free", false);
  e.prior_target = parse_prior_target(get_or<std::string>(c, "/prior_target", "symbol"));
  e.spacing = parse_target_spacing(get_or<std::string>(c, "/spacing", "verbatim"));
  e.max_failure_rate = get_or<double>(c, "/max_failure_rate", 0.01);
  const json::json_pointer tp("/templates");
  if (c.contains(tp) && c.at(tp).is_string()) {
    e.templates = TemplateConfig::load(c.at(tp).get<std::string>());
  } else if (c.contains(tp) && c.at(tp).is_object()) {
    e.templates = TemplateConfig::from_json(c.at(tp).dump());
  }
  return e;
}

void write_effective_config(const json& c, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream f(out_dir / "effective_config.json");
  if (!f) throw IoError("cannot write " + (out_dir / "effective_config.json").string());
  f << c.dump(2) << '\n';
}

void print_summary(const RunResult& run, std::ostream& out) {
  const RunSummary& s = run.summary;
  out << run.key.model << ' ' << run.key.dataset << ' ' << run.key.format << " k=" << run.key.shots;
  if (run.key.tag != "main") out << " tag=" << run.key.tag;
  out << ": accuracy " << format_fixed2(s.accuracy.mean);
  if (s.pmi_accuracy) out << ", pmi " << format_fixed2(s.pmi_accuracy->mean);
  if (s.sfc_free_accuracy) out << ", sfc-free " << format_fixed2(s.sfc_free_accuracy->mean);
  out << ", pmv " << format_fixed2(s.mean_pmv.mean) << ", bound " << format_fixed2(s.bound_satisfaction.mean)
      << ", failures " << s.failures << '/' << s.instances << (s.valid ? "" : " [INVALID]") << '\n';
}

int finish_runs(const std::vector<RunResult>& runs, const fs::path& out_dir, double max_failure_rate,
                std::ostream& out, std::ostream& err) {
  emit_report(runs, out_dir, max_failure_rate);
  bool all_valid = !runs.empty();
  bool backend_failure = false;
  for (const auto& run : runs) {
    print_summary(run, out);
    all_valid = all_valid && run.summary.valid;
    for (const auto& r : run.results) {
      if (r.failure == FailureKind::Transport || r.failure == FailureKind::Capability) backend_failure = true;
    }
    for (const auto& note : run.summary.notes) err << "note: " << note << '\n';
  }
  out << "reports written to " << out_dir.string() << '\n';
  if (all_valid) return kExitOk;
  return backend_failure ? kExitBackend : kExitInvalidRun;
}

int cmd_evaluate(const RunFlags& f, std::ostream& out, std::ostream& err) {
  const json c = effective_config(f);
  std::vector<std::size_t> shots = get_or<std::vector<std::size_t>>(c, "/shots", {0});
  if (shots.empty()) throw UsageError("at least one shot count is required");
  for (std::size_t k : shots) {
    if (k > kExamplePoolSize) throw UsageError("shots must be <= " + std::to_string(kExamplePoolSize));
    if (!is_standard_shot_count(k)) {
      err << "warning: --shots " << k << " is outside the standard grid {0, 1, 2, 4, 8}\n";
    }
  }
  const bool need_pool = std::any_of(shots.begin(), shots.end(), [](std::size_t k) { return k > 0; });
  const LoadedData data = load_data(c, need_pool);
  EvalConfig cfg = eval_config(c, data.name);
  auto backend = make_backend(c);
  const GatewayOptions gopts = gateway_options(c);
  const fs::path out_dir = get_or<std::string>(c, "/out", "sfc-out");
  write_effective_config(c, out_dir);

  Gateway gateway(backend, gopts);
  std::vector<RunResult> runs;
  for (std::size_t k : shots) {
    cfg.shots = k;
    runs.push_back(run_evaluation(cfg, data.eval, data.pool, gateway));
  }
  out << "backend calls " << gateway.backend_calls() << ", cache hits " << gateway.cache_hits() << '\n';
  return finish_runs(runs, out_dir, cfg.max_failure_rate, out, err);
}

int cmd_ablate(const RunFlags& f, std::ostream& out, std::ostream& err) {
  const json c = effective_config(f);
  std::vector<AblationTag> tags;
  for (const auto& t : get_or<std::vector<std::string>>(c, "/tags", {})) tags.push_back(parse_ablation_tag(t));
  if (tags.empty()) tags = all_ablation_tags();
  const LoadedData data = load_data(c, false);
  const EvalConfig cfg = eval_config(c, data.name);
  auto backend = make_backend(c);
  const GatewayOptions gopts = gateway_options(c);
  const fs::path out_dir = get_or<std::string>(c, "/out", "sfc-out");
  write_effective_config(c, out_dir);

  Gateway gateway(backend, gopts);
  const auto runs = run_ablation(cfg, tags, data.eval, gateway);
  out << "backend calls " << gateway.backend_calls() << ", cache hits " << gateway.cache_hits() << '\n';
  return finish_runs(runs, out_dir, cfg.max_failure_rate, out, err);
}

struct RenderFlags {
  std::string instances;
  std::size_t index = 0;
  std::string id;
  std::string format = "string";
  std::size_t shots = 0;
  std::uint64_t seed = 0;
  std::string demos;
  std::string pool;
  std::string dataset_name;
  std::string templates;
  std::optional<std::size_t> target;
  std::string ablation;
  std::string spacing = "verbatim";
};

std::vector<Instance> read_instances(const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError("instance file not found: " + path);
  return read_canonical(path);
}

int cmd_render(const RenderFlags& f, std::ostream& out) {
  const auto instances = read_instances(f.instances);
  const Instance* inst = nullptr;
  if (!f.id.empty()) {
    for (const auto& i : instances) {
      if (i.id == f.id) inst = &i;
    }
    if (!inst) throw UsageError("no instance with id '" + f.id + "'");
  } else {
    if (f.index >= instances.size()) throw UsageError("--index out of range");
    inst = &instances[f.index];
  }
  const TemplateConfig templates =
      f.templates.empty() ? TemplateConfig::defaults() : TemplateConfig::load(f.templates);
  const HeaderSet headers = templates.headers_for(f.dataset_name, inst->subject);
  const TargetSpacing spacing = parse_target_spacing(f.spacing);

  RenderedPrompt rendered;
  if (!f.ablation.empty()) {
    rendered = ablation_context(*inst, parse_ablation_tag(f.ablation), headers);
  } else {
    PromptSpec spec;
    spec.format = parse_format(f.format);
    spec.shots = f.shots;
    spec.seed = f.seed;
    spec.header = headers.for_format(spec.format);
    if (!f.demos.empty()) {
      spec.example_pool = read_instances(f.demos);
    } else if (f.shots > 0) {
      if (f.pool.empty()) throw UsageError("--shots > 0 needs --demos or --pool");
      spec.example_pool = select_examples(read_instances(f.pool), f.seed, f.shots);
    }
    if (spec.example_pool.size() < f.shots) throw UsageError("fewer demonstrations than --shots");
    rendered = render(spec, *inst);
  }
  if (f.target) {
    if (*f.target >= rendered.targets.size()) throw UsageError("--target out of range");
    out << scoring_pair(rendered, *f.target, spacing).continuation;
  } else {
    out << rendered.prompt_text;
  }
  out.flush();
  return kExitOk;
}

int cmd_report(const std::string& in, const std::string& out_dir, double max_failure_rate, std::ostream& out,
               std::ostream& err) {
  if (!fs::is_regular_file(in)) throw UsageError("instance records not found: " + in);
  const auto runs = read_instance_records(in, max_failure_rate);
  const fs::path dir = out_dir;
  return finish_runs(runs, dir, max_failure_rate, out, err);
}

std::size_t suggest_coarser_step(const SimulateOptions& o) {
  // Grid units at residual 1, the worst case.
  std::size_t units = static_cast<std::size_t>(std::llround(1.0 / o.step));
  while (units > 1 && composition_count(units, o.max_choices) > kMaxMassAssignments) units /= 2;
  return units;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multiple-choice scoring, surface-form-competition diagnostics and bound checks"};
  app.name("sfc");
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 success, 1 invalid run, 2 usage error, 3 backend failure.\n"
      "Remote backend environment: SFC_API_BASE, SFC_API_KEY, SFC_MODEL, SFC_TOP_LOGPROBS, SFC_MAX_TOKENS.");

  RunFlags eval_flags;
  auto* evaluate = app.add_subcommand("evaluate", "Score a dataset under one format and one or more shot counts");
  add_run_flags(evaluate, eval_flags, false);

  RunFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "Score the six conditioning contexts, zero-shot");
  add_run_flags(ablate, ablate_flags, true);

  SimulateOptions sim;
  bool demo = false;
  std::string sim_out;
  auto* simulate = app.add_subcommand("simulate", "Check the impact bounds by exhaustive residual enumeration");
  simulate->add_option("--instances", sim.instances, "Number of random instances")->capture_default_str();
  simulate->add_option("--max-choices", sim.max_choices, "Choices per instance, drawn from 2..N")
      ->capture_default_str();
  simulate->add_option("--step", sim.step, "Residual grid step")->capture_default_str();
  simulate->add_option("--seed", sim.seed, "Generator seed")->capture_default_str();
  simulate->add_flag("--residual-zero", sim.residual_zero, "All mass on the valid choices");
  simulate->add_flag("--demo", demo, "Print the two-panel bath/puddle worked example");
  simulate->add_option("--out", sim_out, "Also write the statistics as JSON");

  RenderFlags rf;
  auto* render_cmd = app.add_subcommand("render", "Print a prompt (or one scored target) byte for byte");
  render_cmd->add_option("--instances", rf.instances, "Canonical instance file")->required();
  render_cmd->add_option("--index", rf.index, "Instance position in the file");
  render_cmd->add_option("--id", rf.id, "Instance id (overrides --index)");
  render_cmd->add_option("--format", rf.format, "string, string_answer or enumerated");
  render_cmd->add_option("--shots", rf.shots, "Number of demonstrations");
  render_cmd->add_option("--seed", rf.seed, "Demonstration seed for --pool");
  render_cmd->add_option("--demos", rf.demos, "Canonical file of demonstrations, used in order");
  render_cmd->add_option("--pool", rf.pool, "Canonical training pool to draw demonstrations from");
  render_cmd->add_option("--dataset-name", rf.dataset_name, "Header set, e.g. openbookqa");
  render_cmd->add_option("--templates", rf.templates, "Header template JSON file");
  render_cmd->add_option("--target", rf.target, "Print the continuation scored for choice i");
  render_cmd->add_option("--ablation", rf.ablation, "Render an ablation context instead");
  render_cmd->add_option("--spacing", rf.spacing, "verbatim or leading-space (affects --target)");

  std::string report_in;
  std::string report_out;
  double report_rate = 0.01;
  auto* report = app.add_subcommand("report", "Rebuild summary tables from instances.jsonl");
  report->add_option("--in", report_in, "instances.jsonl from an earlier run")->required();
  report->add_option("--out", report_out, "Output directory")->required();
  report->add_option("--max-failure-rate", report_rate, "Validity threshold")->capture_default_str();

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitUsage;
    }
    if (evaluate->parsed()) return cmd_evaluate(eval_flags, out, err);
    if (ablate->parsed()) return cmd_ablate(ablate_flags, out, err);
    if (render_cmd->parsed()) return cmd_render(rf, out);
    if (report->parsed()) return cmd_report(report_in, report_out, report_rate, out, err);
    if (simulate->parsed()) {
      if (demo) {
        print_worked_example(out);
        return kExitOk;
      }
      SimulateStats stats;
      try {
        stats = simulate_bounds(sim);
      } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        if (sim.max_choices >= 2 && sim.step > 0.0 && sim.step <= 1.0) {
          err << "hint: try --step " << 1.0 / static_cast<double>(suggest_coarser_step(sim)) << '\n';
        }
        return kExitUsage;
      }
      print_simulation(stats, out);
      if (!sim_out.empty()) {
        std::ofstream f(sim_out);
        if (!f) throw IoError("cannot write " + sim_out);
        f << json{{"instances", stats.instances},
                  {"tight_bound_holds", stats.tight_holds},
                  {"simple_bound_holds", stats.simple_holds},
                  {"soundness_violations", stats.soundness_violations},
                  {"tight_bound_fails", stats.tight_fails},
                  {"runner_up_flip_or_tie", stats.completeness_hits},
                  {"assignments_checked", stats.assignments_checked}}
                 .dump(2)
          << '\n';
      }
      return stats.soundness_violations == 0 ? kExitOk : kExitInvalidRun;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << '\n';
    return kExitBackend;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const EscapingError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalidRun;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalidRun;
  }
  return kExitUsage;
}

}  // namespace sfc::cli
