#include <algorithm>
#include <thread>

#include "sfc/backend.hpp"
#include "sfc/errors.hpp"

namespace sfc {
namespace {

std::size_t checked_parallelism(const GatewayOptions& options) {
  if (options.parallelism == 0) throw ConfigError("parallelism must be >= 1");
  if (options.retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
  return options.parallelism;
}

std::uint64_t salt_of(const std::string& key) {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < 16 && i < key.size(); ++i) s = (s << 4) | (key[i] % 16);
  return s;
}

}  // namespace

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)),
      options_(std::move(options)),
      identity_(backend_ ? backend_->identity() : std::string()),
      cache_(options_.cache_path),
      bucket_(options_.rate_limit_per_second, options_.rate_burst),
      slots_(static_cast<std::ptrdiff_t>(checked_parallelism(options_))) {
  if (!backend_) throw ConfigError("gateway needs a backend");
}

ScoreOutcome Gateway::try_score(const ScoreRequest& request) {
  ScoreOutcome outcome;
  try {
    request.validate();
  } catch (const RequestError& e) {
    outcome.failure = FailureKind::Request;
    outcome.error = e.what();
    return outcome;
  }

  const std::string key = cache_key(identity_, request);
  if (auto hit = cache_.find(key)) {
    ++cache_hits_;
    outcome.response = std::move(hit);
    outcome.from_cache = true;
    return outcome;
  }

  for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
    if (attempt > 1) std::this_thread::sleep_for(options_.retry.delay_before(attempt, salt_of(key)));
    outcome.attempts = attempt;
    bucket_.acquire();
    slots_.acquire();
    const std::size_t now = ++in_flight_;
    std::size_t seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    ++backend_calls_;
    struct Release {
      Gateway* g;
      ~Release() {
        --g->in_flight_;
        g->slots_.release();
      }
    };
    try {
      ScoreResponse response;
      {
        Release guard{this};
        response = backend_->score(request);
      }
      cache_.insert(key, response);
      outcome.response = std::move(response);
      outcome.failure = FailureKind::None;
      outcome.error.clear();
      return outcome;
    } catch (const TransportError& e) {
      outcome.failure = FailureKind::Transport;
      outcome.error = e.what();
    } catch (const CapabilityError& e) {
      outcome.failure = FailureKind::Capability;
      outcome.error = e.what();
      return outcome;
    } catch (const Error& e) {
      outcome.failure = FailureKind::Request;
      outcome.error = e.what();
      return outcome;
    } catch (const std::exception& e) {
      outcome.failure = FailureKind::Other;
      outcome.error = e.what();
      return outcome;
    }
  }
  return outcome;
}

ScoreResponse Gateway::score(const ScoreRequest& request) {
  auto outcome = try_score(request);
  if (outcome.ok()) return std::move(*outcome.response);
  switch (outcome.failure) {
    case FailureKind::Transport:
      throw TransportError(outcome.error + " (after " + std::to_string(outcome.attempts) +
                           " attempts)");
    case FailureKind::Capability: throw CapabilityError(outcome.error);
    case FailureKind::Request: throw RequestError(outcome.error);
    default: throw BackendError(outcome.error);
  }
}

std::vector<ScoreOutcome> Gateway::batch_score(std::span<const ScoreRequest> requests) {
  std::vector<ScoreOutcome> out(requests.size());
  const std::size_t workers = std::min(options_.parallelism, requests.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < requests.size(); ++i) out[i] = try_score(requests[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < requests.size(); i = next++) out[i] = try_score(requests[i]);
      });
    }
  }
  return out;
}

std::optional<std::vector<double>> Gateway::class_masses(
    std::string_view prompt, std::span<const std::string> continuations) {
  return backend_->class_masses(prompt, continuations);
}

}  // namespace sfc
