#include "sfc/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "json.hpp"
#include "sfc/errors.hpp"

namespace sfc {

using nlohmann::json;

namespace {

json num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double denum(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw ValidationError("bad number '" + s + "'");
  }
  return j.get<double>();
}

json num_array(const std::vector<double>& values) {
  json a = json::array();
  for (double v : values) a.push_back(num(v));
  return a;
}

std::vector<double> denum_array(const json& j) {
  std::vector<double> out;
  for (const auto& v : j) out.push_back(denum(v));
  return out;
}

json prediction_json(std::size_t index, bool correct) { return {{"index", index}, {"correct", correct}}; }

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string key_columns(const RunKey& k) {
  return csv_field(k.model) + ',' + csv_field(k.dataset) + ',' + csv_field(k.format) + ',' +
         std::to_string(k.shots) + ',' + csv_field(k.tag);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

std::string format_fixed2(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  return buf;
}

std::string instance_record(const RunKey& key, const InstanceResult& r) {
  json j;
  j["schema"] = kInstanceRecordSchema;
  j["model"] = key.model;
  j["dataset"] = key.dataset;
  j["format"] = key.format;
  j["shots"] = key.shots;
  j["tag"] = key.tag;
  j["id"] = r.id;
  j["seed"] = r.seed;
  j["failed"] = r.failed;
  if (r.failed) {
    j["failure"] = failure_kind_name(r.failure);
    j["error"] = r.error;
  }

  json choices = json::array();
  for (const auto& c : r.choices) choices.push_back({{"label", c.label}, {"text", c.text}});
  j["choices"] = std::move(choices);
  j["correct_index"] = r.correct_index;
  if (r.failed) return j.dump();

  j["first_tokens"] = r.first_tokens;
  j["conditional_logprobs"] = num_array(r.probs.conditional);
  j["prior_logprobs"] = r.probs.prior ? num_array(*r.probs.prior) : json(nullptr);
  json mass = json::object();
  for (const auto& [tok, p] : r.probs.first_token_mass) mass[tok] = num(p);
  j["first_token_mass"] = std::move(mass);
  j["class_masses"] = r.class_masses ? num_array(*r.class_masses) : json(nullptr);
  j["pmv"] = num(r.pmv);

  json preds;
  preds["sequence"] = prediction_json(r.sequence.index, r.sequence.is_correct);
  preds["pmi"] = r.pmi ? prediction_json(r.pmi->index, r.pmi->is_correct) : json(nullptr);
  preds["sfc_free"] = r.sfc_free ? prediction_json(r.sfc_free->index, r.sfc_free->is_correct) : json(nullptr);
  j["predictions"] = std::move(preds);

  const BoundReport& b = r.bound;
  j["bound"] = {{"pmv", num(b.pmv)},
                {"residual", num(b.residual)},
                {"top_index", b.top_index},
                {"top_prob", num(b.top_prob)},
                {"runner_up_index", b.runner_up_index},
                {"runner_up_prob", num(b.runner_up_prob)},
                {"applicable", b.applicable},
                {"tight_bound_holds", b.tight_bound_holds},
                {"simple_bound_holds", b.simple_bound_holds}};
  j["diagnostics"] = {{"clamped_priors", r.diagnostics.clamped_priors},
                      {"pmv_lower_bound", r.diagnostics.pmv_lower_bound},
                      {"shared_first_token", r.diagnostics.shared_first_token}};
  return j.dump();
}

void emit_report(std::span<const RunResult> runs, const std::filesystem::path& out_dir,
                 double max_failure_rate) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  const auto inst_path = out_dir / "instances.jsonl";
  auto inst = open_out(inst_path);
  for (const auto& run : runs) {
    for (const auto& r : run.results) inst << instance_record(run.key, r) << '\n';
  }
  finish(inst, inst_path);

  const auto sum_path = out_dir / "summary.csv";
  auto sum = open_out(sum_path);
  sum << "model,dataset,format,shots,tag,metric,mean,stderr,n_seeds,n_instances,failures,valid\n";
  for (const auto& run : runs) {
    const RunSummary& s = run.summary;
    auto row = [&](std::string_view metric, const MetricStat& m) {
      sum << key_columns(run.key) << ',' << metric << ',' << format_fixed2(m.mean) << ','
          << (m.std_error ? format_fixed2(*m.std_error) : "") << ',' << s.n_seeds << ',' << s.instances
          << ',' << s.failures << ',' << (s.valid ? "true" : "false") << '\n';
    };
    row("accuracy", s.accuracy);
    if (s.pmi_accuracy) row("pmi_accuracy", *s.pmi_accuracy);
    if (s.sfc_free_accuracy) row("sfc_free_accuracy", *s.sfc_free_accuracy);
    row("mean_pmv", s.mean_pmv);
    row("bound_satisfaction", s.bound_satisfaction);
  }
  finish(sum, sum_path);

  const auto plot_path = out_dir / "plot_data.csv";
  auto plot = open_out(plot_path);
  plot << "model,dataset,format,shots,tag,accuracy,accuracy_stderr,pmi_accuracy,pmi_accuracy_stderr,"
          "mean_pmv,mean_pmv_stderr,bound_satisfaction,sfc_free_accuracy,valid\n";
  for (const auto& run : runs) {
    const RunSummary& s = run.summary;
    auto mean = [](const std::optional<MetricStat>& m) { return m ? format_fixed2(m->mean) : std::string(); };
    auto se = [](const std::optional<MetricStat>& m) {
      return m && m->std_error ? format_fixed2(*m->std_error) : std::string();
    };
    plot << key_columns(run.key) << ',' << format_fixed2(s.accuracy.mean) << ',' << se(s.accuracy) << ','
         << mean(s.pmi_accuracy) << ',' << se(s.pmi_accuracy) << ',' << format_fixed2(s.mean_pmv.mean) << ','
         << se(s.mean_pmv) << ',' << format_fixed2(s.bound_satisfaction.mean) << ','
         << mean(s.sfc_free_accuracy) << ',' << (s.valid ? "true" : "false") << '\n';
  }
  finish(plot, plot_path);

  json meta;
  meta["schema"] = kRunMetaSchema;
  meta["max_failure_rate"] = max_failure_rate;
  bool valid = !runs.empty();
  json run_list = json::array();
  for (const auto& run : runs) {
    valid = valid && run.summary.valid;
    run_list.push_back({{"model", run.key.model},
                        {"dataset", run.key.dataset},
                        {"format", run.key.format},
                        {"shots", run.key.shots},
                        {"tag", run.key.tag},
                        {"valid", run.summary.valid},
                        {"instances", run.summary.instances},
                        {"failures", run.summary.failures},
                        {"bound_excluded", run.summary.bound_excluded},
                        {"notes", run.summary.notes}});
  }
  meta["valid"] = valid;
  meta["runs"] = std::move(run_list);
  meta["notes"] = runs.empty() ? json::array({"empty result set"}) : json::array();
  const auto meta_path = out_dir / "run_meta.json";
  auto meta_out = open_out(meta_path);
  meta_out << meta.dump(2) << '\n';
  finish(meta_out, meta_path);
}

std::vector<RunResult> read_instance_records(const std::filesystem::path& path, double max_failure_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<RunKey, RunResult> runs;
  std::map<RunKey, std::set<std::uint64_t>> seeds;
  std::vector<RunKey> order;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (j.value("schema", "") != kInstanceRecordSchema) {
        throw ParseError(path.string(), lineno, "unsupported record schema");
      }
      RunKey key{j.at("model"), j.at("dataset"), j.at("format"), j.at("shots"), j.at("tag")};
      InstanceResult r;
      r.id = j.at("id");
      r.seed = j.at("seed");
      r.failed = j.at("failed");
      r.error = j.value("error", "");
      if (r.failed) {
        const std::string kind = j.value("failure", "other");
        r.failure = FailureKind::Other;
        for (FailureKind k : {FailureKind::Transport, FailureKind::Capability, FailureKind::Request}) {
          if (kind == failure_kind_name(k)) r.failure = k;
        }
      }
      for (const auto& c : j.at("choices")) r.choices.push_back({c.at("label"), c.at("text")});
      r.correct_index = j.at("correct_index");
      if (!r.failed) {
        r.first_tokens = j.at("first_tokens").get<std::vector<std::string>>();
        r.probs.conditional = denum_array(j.at("conditional_logprobs"));
        if (!j.at("prior_logprobs").is_null()) r.probs.prior = denum_array(j.at("prior_logprobs"));
        for (const auto& [tok, p] : j.at("first_token_mass").items()) r.probs.first_token_mass[tok] = denum(p);
        if (!j.at("class_masses").is_null()) r.class_masses = denum_array(j.at("class_masses"));
        r.diagnostics.pmv_lower_bound = j.at("diagnostics").at("pmv_lower_bound");
        recompute(r);
      }
      auto [it, inserted] = runs.try_emplace(key);
      if (inserted) {
        it->second.key = key;
        order.push_back(key);
      }
      seeds[key].insert(r.seed);
      it->second.results.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  std::vector<RunResult> out;
  for (const auto& key : order) {
    RunResult run = std::move(runs[key]);
    const std::vector<std::uint64_t> s(seeds[key].begin(), seeds[key].end());
    run.summary = summarize(run.results, s, max_failure_rate);
    out.push_back(std::move(run));
  }
  return out;
}

}  // namespace sfc
