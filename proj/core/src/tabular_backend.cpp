#include <algorithm>
#include <cmath>

#include "hash.hpp"
#include "sfc/backend.hpp"
#include "sfc/errors.hpp"

namespace sfc {
namespace {

std::string_view strip_leading_spaces(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\n' || c == '\t'; });
}

}  // namespace

TabularBackend::TabularBackend(TabularLM lm, ContextResolver resolver)
    : lm_(std::move(lm)),
      resolver_(resolver ? std::move(resolver) : ContextResolver(&resolve_by_last_occurrence)),
      identity_("tabular:" + detail::sha256_hex(to_json(lm_)).substr(0, 32)),
      marginal_(lm_.marginal()) {}

std::optional<std::size_t> TabularBackend::resolve_by_last_occurrence(const TabularLM& lm,
                                                                      std::string_view prompt) {
  std::optional<std::size_t> best;
  std::size_t best_end = 0;
  std::size_t best_len = 0;
  for (std::size_t c = 0; c < lm.context_count(); ++c) {
    const std::string& name = lm.contexts()[c];
    if (name.empty()) continue;
    const std::size_t pos = prompt.rfind(name);
    if (pos == std::string_view::npos) continue;
    const std::size_t end = pos + name.size();
    if (!best || end > best_end || (end == best_end && name.size() > best_len)) {
      best = c;
      best_end = end;
      best_len = name.size();
    }
  }
  return best;
}

std::vector<double> TabularBackend::row_for(std::string_view prompt) const {
  if (is_blank(prompt)) return marginal_;
  const auto ctx = resolver_(lm_, prompt);
  if (!ctx) throw RequestError("prompt does not resolve to any tabular context");
  return lm_.conditional_row(*ctx);
}

ScoreResponse TabularBackend::score(const ScoreRequest& request) {
  request.validate();
  const auto row = row_for(request.prompt_text);
  ScoreResponse out;
  if (!request.continuation.empty()) {
    const std::string_view form_text = strip_leading_spaces(request.continuation);
    const auto form = lm_.find_form(form_text);
    if (!form) throw RequestError("continuation '" + std::string(form_text) + "' is not in the vocabulary");
    if (row[*form] <= 0.0) throw RequestError("continuation has zero probability");
    const double lp = std::log(row[*form]);
    out.tokens = {std::string(form_text)};
    out.token_logprobs = {lp};
    out.continuation_logprob = lp;
  }
  if (request.want_first_token_distribution) {
    std::map<std::string, double> dist;
    if (request.candidate_first_tokens) {
      for (const auto& cand : *request.candidate_first_tokens) {
        const std::string_view t = strip_leading_spaces(cand);
        if (const auto f = lm_.find_form(t)) dist[std::string(t)] = row[*f];
      }
    } else {
      for (std::size_t f = 0; f < row.size(); ++f) dist[lm_.vocabulary()[f]] = row[f];
    }
    out.first_token_probs = std::move(dist);
  }
  return out;
}

std::optional<std::vector<double>> TabularBackend::class_masses(
    std::string_view prompt, std::span<const std::string> continuations) {
  const auto row = row_for(prompt);
  const auto& spec = lm_.class_spec();
  std::vector<double> masses;
  masses.reserve(continuations.size());
  for (const auto& cont : continuations) {
    const auto form = lm_.find_form(strip_leading_spaces(cont));
    if (!form) throw RequestError("continuation '" + cont + "' is not in the vocabulary");
    double m = row[*form];
    for (const auto& members : spec.classes) {
      if (std::find(members.begin(), members.end(), *form) != members.end()) {
        m = 0.0;
        for (std::size_t f : members) m += row[f];
        break;
      }
    }
    masses.push_back(m);
  }
  return masses;
}

}  // namespace sfc
