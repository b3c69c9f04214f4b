#pragma once

// Probability providers. A Backend answers "what is log P(continuation |
// prompt)?"; the Gateway wraps one with a content-addressed response cache,
// retries, a rate limit and a bound on in-flight requests.
//
// The remote wire contract is documented in docs/remote_api.md.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sfc/lab.hpp"

namespace sfc {

struct ScoreRequest {
  std::string prompt_text;
  std::string continuation;
  bool want_first_token_distribution = false;
  // When set, first_token_probs is restricted to these tokens.
  std::optional<std::vector<std::string>> candidate_first_tokens;

  // Throws RequestError for an empty continuation unless only the
  // first-token distribution is wanted.
  void validate() const;
};

struct ScoreResponse {
  // Sum of token_logprobs.
  double continuation_logprob = 0.0;
  std::vector<std::string> tokens;
  std::vector<double> token_logprobs;
  // P(token | prompt) at the first continuation position (linear).
  std::optional<std::map<std::string, double>> first_token_probs;
  // False when the provider's tokenization merged the last prompt character
  // into the first continuation token; that token's logprob then also
  // covers part of the prompt.
  bool boundary_aligned = true;

  friend bool operator==(const ScoreResponse&, const ScoreResponse&) = default;
};

std::string to_json(const ScoreResponse& response);
ScoreResponse score_response_from_json(std::string_view text);

class Backend {
 public:
  virtual ~Backend() = default;

  // Stable identifier; part of every cache key.
  virtual std::string identity() const = 0;

  // Must be safe to call from several threads at once.
  virtual ScoreResponse score(const ScoreRequest& request) = 0;

  // Semantic-class masses for each continuation, when the backend knows its
  // equivalence classes. Remote models do not.
  virtual std::optional<std::vector<double>> class_masses(
      std::string_view /*prompt*/, std::span<const std::string> /*continuations*/) {
    return std::nullopt;
  }
};

// Serves probabilities straight from a TabularLM. A continuation must be a
// single vocabulary form (leading spaces are ignored). A blank prompt scores
// against the marginal P(form); any other prompt is mapped to a context by
// the resolver.
class TabularBackend final : public Backend {
 public:
  using ContextResolver =
      std::function<std::optional<std::size_t>(const TabularLM&, std::string_view prompt)>;

  explicit TabularBackend(TabularLM lm, ContextResolver resolver = {});

  // Picks the context whose name ends furthest into the prompt (ties go to
  // the longer name). For a few-shot prompt that is the test question.
  static std::optional<std::size_t> resolve_by_last_occurrence(const TabularLM& lm,
                                                               std::string_view prompt);

  std::string identity() const override { return identity_; }
  ScoreResponse score(const ScoreRequest& request) override;
  std::optional<std::vector<double>> class_masses(
      std::string_view prompt, std::span<const std::string> continuations) override;

  const TabularLM& model() const { return lm_; }

 private:
  std::vector<double> row_for(std::string_view prompt) const;

  TabularLM lm_;
  ContextResolver resolver_;
  std::string identity_;
  std::vector<double> marginal_;
};

struct RemoteConfig {
  // e.g. "https://api.example.com/v1"; requests go to <base_url>/completions.
  std::string base_url;
  std::string model;
  std::string api_key;
  int top_logprobs = 5;
  // Tokens to generate after the echoed prompt; some servers reject 0.
  int max_tokens = 0;
  // Sent instead of an empty prompt, since providers assign no logprob to
  // the very first token of a request.
  std::string empty_prompt_text = "<|endoftext|>";
  std::size_t max_prompt_chars = 200'000;
  std::chrono::seconds timeout{60};

  // SFC_API_BASE, SFC_API_KEY, SFC_MODEL, SFC_TOP_LOGPROBS, SFC_MAX_TOKENS.
  static RemoteConfig from_env();
};

class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig config);

  std::string identity() const override;
  ScoreResponse score(const ScoreRequest& request) override;

  const RemoteConfig& config() const { return config_; }

 private:
  RemoteConfig config_;
  std::string scheme_host_;
  std::string path_prefix_;
};

// Content hash over the backend identity and every request field that can
// change the response.
std::string cache_key(std::string_view backend_identity, const ScoreRequest& request);

// Append-only on-disk response cache (in-memory when no path is given).
class ScoreCache {
 public:
  explicit ScoreCache(std::optional<std::filesystem::path> path = std::nullopt);

  std::optional<ScoreResponse> find(const std::string& key) const;
  void insert(const std::string& key, const ScoreResponse& response);
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::optional<std::filesystem::path> path_;
  std::unordered_map<std::string, ScoreResponse> entries_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{250};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{8000};
  // Fraction of each delay that is randomized, in [0, 1].
  double jitter = 0.5;

  std::chrono::milliseconds delay_before(int attempt, std::uint64_t salt) const;
};

// Token bucket; rate <= 0 disables limiting.
class TokenBucket {
 public:
  TokenBucket(double rate_per_second, double burst);
  void acquire();

 private:
  std::mutex mu_;
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

struct GatewayOptions {
  std::size_t parallelism = 1;
  double rate_limit_per_second = 0.0;
  double rate_burst = 1.0;
  RetryPolicy retry;
  std::optional<std::filesystem::path> cache_path;
};

enum class FailureKind { None, Transport, Capability, Request, Other };
std::string_view failure_kind_name(FailureKind kind);

struct ScoreOutcome {
  std::optional<ScoreResponse> response;
  FailureKind failure = FailureKind::None;
  std::string error;
  int attempts = 0;
  bool from_cache = false;

  bool ok() const { return response.has_value(); }
};

class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Backend> backend, GatewayOptions options = {});

  // Throws the backend's error once retries are exhausted.
  ScoreResponse score(const ScoreRequest& request);
  ScoreOutcome try_score(const ScoreRequest& request);

  // Responses are index-aligned with requests; failures are per index.
  std::vector<ScoreOutcome> batch_score(std::span<const ScoreRequest> requests);

  std::optional<std::vector<double>> class_masses(std::string_view prompt,
                                                  std::span<const std::string> continuations);

  const Backend& backend() const { return *backend_; }
  const GatewayOptions& options() const { return options_; }

  std::uint64_t backend_calls() const { return backend_calls_.load(); }
  std::uint64_t cache_hits() const { return cache_hits_.load(); }
  std::size_t max_in_flight() const { return max_in_flight_.load(); }
  std::size_t cache_size() const { return cache_.size(); }

 private:
  std::shared_ptr<Backend> backend_;
  GatewayOptions options_;
  std::string identity_;
  ScoreCache cache_;
  TokenBucket bucket_;
  std::counting_semaphore<> slots_;
  std::atomic<std::uint64_t> backend_calls_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> max_in_flight_{0};
};

}  // namespace sfc
