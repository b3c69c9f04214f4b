#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <thread>

#include "hash.hpp"
#include "json.hpp"
#include "sfc/backend.hpp"
#include "sfc/errors.hpp"
#include "sfc/mix.hpp"

namespace sfc {

using nlohmann::json;

namespace detail {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static const char* kHex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

}  // namespace detail

void ScoreRequest::validate() const {
  if (continuation.empty() && !want_first_token_distribution) {
    throw RequestError("empty continuation with no first-token distribution requested");
  }
}

std::string to_json(const ScoreResponse& r) {
  json j;
  j["continuation_logprob"] = r.continuation_logprob;
  j["tokens"] = r.tokens;
  j["token_logprobs"] = r.token_logprobs;
  j["first_token_probs"] = r.first_token_probs ? json(*r.first_token_probs) : json(nullptr);
  j["boundary_aligned"] = r.boundary_aligned;
  return j.dump();
}

ScoreResponse score_response_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    ScoreResponse r;
    r.continuation_logprob = j.at("continuation_logprob").get<double>();
    r.tokens = j.at("tokens").get<std::vector<std::string>>();
    r.token_logprobs = j.at("token_logprobs").get<std::vector<double>>();
    if (!j.at("first_token_probs").is_null()) {
      r.first_token_probs = j["first_token_probs"].get<std::map<std::string, double>>();
    }
    r.boundary_aligned = j.value("boundary_aligned", true);
    return r;
  } catch (const json::exception& e) {
    throw ParseError("score-response", 1, e.what());
  }
}

std::string cache_key(std::string_view backend_identity, const ScoreRequest& request) {
  // Length-prefixed fields so that no two distinct requests share a preimage.
  std::string buf;
  auto put = [&buf](std::string_view field) {
    buf += std::to_string(field.size());
    buf += ':';
    buf += field;
    buf += ';';
  };
  put("sfc-score/1");
  put(backend_identity);
  put(request.prompt_text);
  put(request.continuation);
  put(request.want_first_token_distribution ? "dist" : "nodist");
  if (request.candidate_first_tokens) {
    auto tokens = *request.candidate_first_tokens;
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    put("candidates=" + std::to_string(tokens.size()));
    for (const auto& t : tokens) put(t);
  } else {
    put("candidates=all");
  }
  return detail::sha256_hex(buf);
}

std::chrono::milliseconds RetryPolicy::delay_before(int attempt, std::uint64_t salt) const {
  // attempt is 1-based; the first retry (attempt 2) waits base_delay.
  const double raw = static_cast<double>(base_delay.count()) * std::pow(multiplier, attempt - 2);
  const double capped = std::min(raw, static_cast<double>(max_delay.count()));
  SplitMix64 rng(salt ^ mix64(static_cast<std::uint64_t>(attempt)));
  const double j = std::clamp(jitter, 0.0, 1.0);
  const double scaled = capped * (1.0 - j + j * rng.uniform());
  return std::chrono::milliseconds(static_cast<std::int64_t>(scaled));
}

TokenBucket::TokenBucket(double rate_per_second, double burst)
    : rate_(rate_per_second),
      burst_(std::max(burst, 1.0)),
      tokens_(std::max(burst, 1.0)),
      last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
  if (rate_ <= 0.0) return;
  for (;;) {
    std::chrono::duration<double> wait{};
    {
      std::lock_guard lock(mu_);
      const auto now = std::chrono::steady_clock::now();
      tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    }
    std::this_thread::sleep_for(wait);
  }
}

std::string_view failure_kind_name(FailureKind kind) {
  switch (kind) {
    case FailureKind::None: return "none";
    case FailureKind::Transport: return "transport";
    case FailureKind::Capability: return "capability";
    case FailureKind::Request: return "request";
    case FailureKind::Other: return "other";
  }
  return "other";
}

}  // namespace sfc
