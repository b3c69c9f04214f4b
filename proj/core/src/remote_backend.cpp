#include <cmath>
#include <cstdlib>

#include "httplib.h"
#include "json.hpp"
#include "sfc/backend.hpp"
#include "sfc/errors.hpp"

namespace sfc {

using nlohmann::json;

namespace {

// Providers report text_offset in characters; count UTF-8 code points.
std::size_t code_points(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : std::move(fallback);
}

}  // namespace

RemoteConfig RemoteConfig::from_env() {
  RemoteConfig cfg;
  cfg.base_url = env_or("SFC_API_BASE", "");
  cfg.api_key = env_or("SFC_API_KEY", "");
  cfg.model = env_or("SFC_MODEL", "");
  cfg.top_logprobs = std::stoi(env_or("SFC_TOP_LOGPROBS", "5"));
  cfg.max_tokens = std::stoi(env_or("SFC_MAX_TOKENS", "0"));
  return cfg;
}

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.base_url.find("://");
  const std::string scheme = scheme_end == std::string::npos ? "" : config_.base_url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("remote base_url must look like http(s)://host[:port][/path], got '" +
                      config_.base_url + "'");
  }
  const auto path_start = config_.base_url.find('/', scheme_end + 3);
  scheme_host_ = config_.base_url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (config_.model.empty()) throw ConfigError("remote backend needs a model name");
  if (config_.top_logprobs < 1) throw ConfigError("top_logprobs must be >= 1");
}

std::string RemoteBackend::identity() const {
  return "remote:" + config_.base_url + "|" + config_.model +
         "|top=" + std::to_string(config_.top_logprobs) +
         "|max_tokens=" + std::to_string(config_.max_tokens) + "|empty=" + config_.empty_prompt_text;
}

ScoreResponse RemoteBackend::score(const ScoreRequest& request) {
  request.validate();
  const std::string prompt =
      request.prompt_text.empty() ? config_.empty_prompt_text : request.prompt_text;
  if (prompt.size() + request.continuation.size() > config_.max_prompt_chars) {
    throw RequestError("request exceeds max_prompt_chars (" +
                       std::to_string(config_.max_prompt_chars) + ")");
  }
  const bool distribution_only = request.continuation.empty();

  json body;
  body["model"] = config_.model;
  body["prompt"] = prompt + request.continuation;
  body["echo"] = !distribution_only;
  body["max_tokens"] = distribution_only ? std::max(config_.max_tokens, 1) : config_.max_tokens;
  body["logprobs"] = config_.top_logprobs;
  body["temperature"] = 0;

  httplib::Client client(scheme_host_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  const auto res = client.Post(path_prefix_ + "/completions", headers, body.dump(), "application/json");
  if (!res) throw TransportError("HTTP request failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw TransportError("server returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw RequestError("server returned HTTP " + std::to_string(res->status) + ": " +
                       res->body.substr(0, 300));
  }

  json reply;
  try {
    reply = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw TransportError(std::string("unparseable response body: ") + e.what());
  }

  try {
    const auto& choice = reply.at("choices").at(0);
    if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
      throw CapabilityError("provider returned no logprobs");
    }
    const auto& lp = choice["logprobs"];
    const auto tokens = lp.at("tokens").get<std::vector<std::string>>();
    const auto& token_lps = lp.at("token_logprobs");
    const json top = lp.value("top_logprobs", json(nullptr));
    const auto offsets = lp.value("text_offset", std::vector<std::size_t>{});

    ScoreResponse out;
    std::optional<std::size_t> first_index;

    if (distribution_only) {
      if (!tokens.empty()) first_index = 0;
    } else {
      if (offsets.size() != tokens.size()) {
        throw CapabilityError("provider returned no text_offset; cannot locate the continuation");
      }
      const std::size_t start = code_points(prompt);
      const std::size_t end = start + code_points(request.continuation);
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::size_t tok_begin = offsets[i];
        const std::size_t tok_end = tok_begin + code_points(tokens[i]);
        const bool inside = tok_begin >= start && tok_begin < end;
        const bool straddles = tok_begin < start && tok_end > start;
        if (!inside && !straddles) continue;
        if (straddles) out.boundary_aligned = false;
        if (token_lps.at(i).is_null()) {
          throw CapabilityError("provider gave no logprob for continuation token " + std::to_string(i));
        }
        if (!first_index) first_index = i;
        out.tokens.push_back(tokens[i]);
        out.token_logprobs.push_back(token_lps[i].get<double>());
      }
      if (out.tokens.empty()) throw RequestError("continuation mapped to no tokens");
      for (double v : out.token_logprobs) out.continuation_logprob += v;
    }

    if (request.want_first_token_distribution) {
      std::map<std::string, double> dist;
      if (first_index && top.is_array() && *first_index < top.size() && top[*first_index].is_object()) {
        for (const auto& [tok, v] : top[*first_index].items()) dist[tok] = std::exp(v.get<double>());
      }
      if (!distribution_only && !out.tokens.empty()) {
        dist[out.tokens.front()] = std::exp(out.token_logprobs.front());
      }
      if (request.candidate_first_tokens) {
        std::map<std::string, double> kept;
        for (const auto& c : *request.candidate_first_tokens) {
          if (const auto it = dist.find(c); it != dist.end()) kept.insert(*it);
        }
        dist = std::move(kept);
      }
      out.first_token_probs = std::move(dist);
    }
    return out;
  } catch (const json::exception& e) {
    throw CapabilityError(std::string("response does not follow the completions schema: ") + e.what());
  }
}

}  // namespace sfc
