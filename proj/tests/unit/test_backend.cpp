#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

#include "doctest.h"
#include "sfc/backend.hpp"
#include "sfc/errors.hpp"
#include "sfc/lab.hpp"
#include "test_support.hpp"

using namespace sfc;
using namespace std::chrono_literals;

namespace {

ScoreRequest req(std::string prompt, std::string cont) {
  ScoreRequest r;
  r.prompt_text = std::move(prompt);
  r.continuation = std::move(cont);
  return r;
}

GatewayOptions fast(std::size_t parallelism = 1) {
  GatewayOptions o;
  o.parallelism = parallelism;
  o.retry.base_delay = 1ms;
  o.retry.max_delay = 2ms;
  return o;
}

// Wraps a backend and injects failures / latency.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}
  std::string identity() const override { return "scripted:" + inner_->identity(); }
  ScoreResponse score(const ScoreRequest& r) override {
    ++calls;
    const int now = ++active;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    struct Leave {
      std::atomic<int>& a;
      ~Leave() { --a; }
    } leave{active};
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    if (r.prompt_text.find(transient_marker) != std::string::npos && transient_left.fetch_sub(1) > 0) {
      throw TransportError("injected transient failure");
    }
    if (!permanent_marker.empty() && r.prompt_text.find(permanent_marker) != std::string::npos) {
      throw TransportError("injected permanent failure");
    }
    if (!capability_marker.empty() && r.prompt_text.find(capability_marker) != std::string::npos) {
      throw CapabilityError("no logprobs");
    }
    return inner_->score(r);
  }

  std::shared_ptr<Backend> inner_;
  std::atomic<int> calls{0};
  std::atomic<int> active{0};
  std::atomic<int> peak{0};
  std::chrono::milliseconds delay{0};
  std::string transient_marker = "\x01never";
  std::atomic<int> transient_left{0};
  std::string permanent_marker;
  std::string capability_marker;
};

std::shared_ptr<TabularBackend> tabular(std::uint64_t seed = 3) {
  return std::make_shared<TabularBackend>(build_tabular_lm({8, 4, 2, 4, seed}));
}

std::vector<ScoreRequest> hundred_requests(const TabularLM& lm) {
  std::vector<ScoreRequest> out;
  for (std::size_t i = 0; i < 100; ++i) {
    out.push_back(req("prompt " + lm.contexts()[i % lm.context_count()] + " #" + std::to_string(i),
                      lm.vocabulary()[(i * 7) % lm.vocabulary_size()]));
  }
  return out;
}

}  // namespace

TEST_CASE("tabular backend returns exact table log-probabilities") {
  auto be = tabular();
  const TabularLM& lm = be->model();
  for (std::size_t c = 0; c < lm.context_count(); ++c) {
    const auto row = lm.conditional_row(c);
    for (std::size_t f = 0; f < lm.vocabulary_size(); ++f) {
      const auto r = be->score(req("Q: " + lm.contexts()[c], lm.vocabulary()[f]));
      CHECK(std::abs(r.continuation_logprob - std::log(row[f])) <= 1e-12);
      CHECK(r.token_logprobs.size() == 1);
      CHECK(r.tokens.front() == lm.vocabulary()[f]);
    }
  }
  // Leading spaces are ignored; a blank prompt scores the marginal.
  const auto spaced = be->score(req(lm.contexts()[0], " c1"));
  CHECK(spaced.continuation_logprob == be->score(req(lm.contexts()[0], "c1")).continuation_logprob);
  const auto marg = lm.marginal();
  CHECK(std::abs(be->score(req("", "d0")).continuation_logprob -
                 std::log(marg[*lm.find_form("d0")])) <= 1e-12);
  CHECK_THROWS_AS(be->score(req("no context here", "c1")), RequestError);
  CHECK_THROWS_AS(be->score(req(lm.contexts()[0], "zzz")), RequestError);
}

TEST_CASE("tabular backend resolves the context that ends last") {
  SemanticClassSpec spec;
  spec.classes = {{0}, {1}};
  spec.valid_form_index = {0, 0};
  const TabularLM lm({"cat", "concatenate", "dog"}, {"a", "b"}, {0.1, 0.1, 0.2, 0.2, 0.3, 0.1}, spec);
  CHECK(TabularBackend::resolve_by_last_occurrence(lm, "dog then cat") == 0u);
  CHECK(TabularBackend::resolve_by_last_occurrence(lm, "cat then dog") == 2u);
  CHECK(TabularBackend::resolve_by_last_occurrence(lm, "please concatenate") == 1u);
  CHECK_FALSE(TabularBackend::resolve_by_last_occurrence(lm, "bird"));
}

TEST_CASE("tabular first-token distribution and class masses") {
  auto be = tabular();
  const TabularLM& lm = be->model();
  ScoreRequest r = req(lm.contexts()[1], "");
  r.want_first_token_distribution = true;
  r.candidate_first_tokens = std::vector<std::string>{"c0", "c2", "nope"};
  const auto out = be->score(r);
  REQUIRE(out.first_token_probs);
  CHECK(out.first_token_probs->size() == 2);
  const auto row = lm.conditional_row(std::size_t{1});
  CHECK(out.first_token_probs->at("c2") == row[*lm.find_form("c2")]);

  const std::vector<std::string> conts = {"c0", "c1", "d0"};
  const auto masses = be->class_masses(lm.contexts()[1], conts);
  REQUIRE(masses);
  const auto expect = lm.class_masses(1);
  CHECK((*masses)[0] == doctest::Approx(expect[0]).epsilon(1e-14));
  CHECK((*masses)[1] == doctest::Approx(expect[1]).epsilon(1e-14));
  CHECK((*masses)[2] == row[*lm.find_form("d0")]);
}

TEST_CASE("request validation") {
  ScoreRequest r;
  CHECK_THROWS_AS(r.validate(), RequestError);
  r.want_first_token_distribution = true;
  CHECK_NOTHROW(r.validate());
}

TEST_CASE("cache keys separate every field") {
  const ScoreRequest base = req("ab", "c");
  const std::string k = cache_key("id", base);
  CHECK(k.size() == 64);
  CHECK(cache_key("id", base) == k);
  CHECK(cache_key("id2", base) != k);
  CHECK(cache_key("id", req("a", "bc")) != k);
  ScoreRequest d = base;
  d.want_first_token_distribution = true;
  CHECK(cache_key("id", d) != k);
  ScoreRequest c1 = d, c2 = d;
  c1.candidate_first_tokens = std::vector<std::string>{"x", "y"};
  c2.candidate_first_tokens = std::vector<std::string>{"y", "x"};
  CHECK(cache_key("id", c1) == cache_key("id", c2));
  CHECK(cache_key("id", c1) != cache_key("id", d));
}

TEST_CASE("score responses survive a JSON round trip") {
  ScoreResponse r;
  r.continuation_logprob = -1.2345678901234567;
  r.tokens = {" a", "b"};
  r.token_logprobs = {-1.0, -0.2345678901234567};
  r.first_token_probs = std::map<std::string, double>{{" a", 0.3}};
  r.boundary_aligned = false;
  CHECK(score_response_from_json(to_json(r)) == r);
}

TEST_CASE("persistent cache: reload, torn tail, foreign files") {
  test::TempDir dir;
  const auto path = dir / "cache.jsonl";
  ScoreResponse r;
  r.continuation_logprob = -0.5;
  r.tokens = {"x"};
  r.token_logprobs = {-0.5};
  {
    ScoreCache cache(path);
    cache.insert("k1", r);
    cache.insert("k1", r);
    CHECK(cache.size() == 1);
  }
  CHECK(test::read_file(path).rfind(R"({"format":"sfc-score-cache","version":1})", 0) == 0);
  {
    std::ofstream(path, std::ios::app) << R"({"key":"k2","respo)";
  }
  {
    ScoreCache cache(path);
    CHECK(cache.size() == 1);
    CHECK(cache.find("k1") == r);
    cache.insert("k3", r);
  }
  ScoreCache again(path);
  CHECK(again.size() == 2);
  CHECK(again.find("k3") == r);

  test::write_file(dir / "other.jsonl", "{\"format\":\"something\"}\n");
  CHECK_THROWS_AS(ScoreCache(dir / "other.jsonl"), ValidationError);
  test::write_file(dir / "bad.jsonl",
                   "{\"format\":\"sfc-score-cache\",\"version\":1}\nnot json\n{\"key\":\"a\"}\n");
  CHECK_THROWS_AS(ScoreCache(dir / "bad.jsonl"), ParseError);
}

TEST_CASE("retry delays grow, cap and stay deterministic") {
  RetryPolicy p;
  p.jitter = 0.0;
  CHECK(p.delay_before(2, 1) == 250ms);
  CHECK(p.delay_before(3, 1) == 500ms);
  CHECK(p.delay_before(10, 1) == 8000ms);
  p.jitter = 0.5;
  for (int a = 2; a < 8; ++a) {
    const auto d = p.delay_before(a, 99);
    CHECK(d == p.delay_before(a, 99));
    const double full = std::min(250.0 * std::pow(2.0, a - 2), 8000.0);
    CHECK(d.count() >= static_cast<long>(full * 0.5) - 1);
    CHECK(d.count() <= static_cast<long>(full));
  }
}

TEST_CASE("token bucket limits the request rate") {
  TokenBucket bucket(200.0, 1.0);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 11; ++i) bucket.acquire();
  CHECK(std::chrono::steady_clock::now() - start >= 45ms);
  TokenBucket unlimited(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) unlimited.acquire();
}

TEST_CASE("gateway: repeated request is served from cache") {
  auto be = std::make_shared<ScriptedBackend>(tabular());
  Gateway gw(be, fast());
  const auto& lm = static_cast<TabularBackend&>(*be->inner_).model();
  const auto r = req(lm.contexts()[0], "c0");
  const auto first = gw.score(r);
  const auto second = gw.score(r);
  CHECK(first == second);
  CHECK(be->calls == 1);
  CHECK(gw.backend_calls() == 1);
  CHECK(gw.cache_hits() == 1);
}

TEST_CASE("gateway: parallel batch equals sequential batch and respects the bound") {
  auto inner = tabular();
  const auto requests = hundred_requests(inner->model());
  Gateway seq(inner, fast(1));
  const auto a = seq.batch_score(requests);

  auto slow = std::make_shared<ScriptedBackend>(inner);
  slow->delay = 2ms;
  Gateway par(slow, fast(8));
  const auto b = par.batch_score(requests);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].ok());
    REQUIRE(b[i].ok());
    CHECK(*a[i].response == *b[i].response);
  }
  CHECK(par.max_in_flight() <= 8);
  CHECK(slow->peak <= 8);
  CHECK(par.max_in_flight() > 1);

  // Direct sequential score() calls agree with the batch.
  for (std::size_t i = 0; i < requests.size(); i += 17) CHECK(inner->score(requests[i]) == *a[i].response);
}

TEST_CASE("gateway: permuting a batch permutes its results") {
  auto be = tabular();
  auto requests = hundred_requests(be->model());
  Gateway gw(be, fast(4));
  const auto base = gw.batch_score(requests);
  std::vector<std::size_t> perm(requests.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(5));
  std::vector<ScoreRequest> shuffled;
  for (auto i : perm) shuffled.push_back(requests[i]);
  Gateway fresh(be, fast(4));
  const auto out = fresh.batch_score(shuffled);
  for (std::size_t j = 0; j < perm.size(); ++j) CHECK(*out[j].response == *base[perm[j]].response);
}

TEST_CASE("gateway: an injected transient failure is retried in isolation") {
  auto inner = tabular();
  auto be = std::make_shared<ScriptedBackend>(inner);
  auto requests = hundred_requests(inner->model());
  requests[5].prompt_text += " [flaky]";
  be->transient_marker = "[flaky]";
  be->transient_left = 2;
  Gateway gw(be, fast(8));
  const auto out = gw.batch_score(requests);
  for (std::size_t i = 0; i < out.size(); ++i) {
    REQUIRE(out[i].ok());
    CHECK(out[i].attempts == (i == 5 ? 3 : 1));
  }
  CHECK(gw.backend_calls() == 102);
}

TEST_CASE("gateway: exhausted retries and non-retryable errors stay per index") {
  auto inner = tabular();
  auto be = std::make_shared<ScriptedBackend>(inner);
  auto requests = hundred_requests(inner->model());
  requests[3].prompt_text += " [down]";
  requests[7].prompt_text += " [nolog]";
  requests[9].continuation = "not-a-form";
  be->permanent_marker = "[down]";
  be->capability_marker = "[nolog]";
  Gateway gw(be, fast(4));
  const auto out = gw.batch_score(requests);
  CHECK(out[3].failure == FailureKind::Transport);
  CHECK(out[3].attempts == 5);
  CHECK(out[7].failure == FailureKind::Capability);
  CHECK(out[7].attempts == 1);
  CHECK(out[9].failure == FailureKind::Request);
  CHECK(out[9].attempts == 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i != 3 && i != 7 && i != 9) CHECK(out[i].ok());
  }
  CHECK_THROWS_AS(gw.score(requests[3]), TransportError);
  CHECK_THROWS_AS(gw.score(requests[7]), CapabilityError);
  CHECK_THROWS_AS(gw.score(requests[9]), RequestError);
}

TEST_CASE("gateway: warm persistent cache means zero backend calls") {
  test::TempDir dir;
  auto inner = tabular();
  const auto requests = hundred_requests(inner->model());
  GatewayOptions o = fast(4);
  o.cache_path = dir / "c.jsonl";
  std::vector<ScoreOutcome> cold;
  {
    Gateway gw(inner, o);
    cold = gw.batch_score(requests);
    CHECK(gw.backend_calls() == 100);
  }
  Gateway warm(inner, o);
  const auto hot = warm.batch_score(requests);
  CHECK(warm.backend_calls() == 0);
  CHECK(warm.cache_hits() == 100);
  for (std::size_t i = 0; i < hot.size(); ++i) {
    CHECK(hot[i].from_cache);
    CHECK(*hot[i].response == *cold[i].response);
  }
}

TEST_CASE("gateway option validation") {
  GatewayOptions o;
  o.parallelism = 0;
  CHECK_THROWS_AS(Gateway(tabular(), o), ConfigError);
  CHECK_THROWS_AS(Gateway(nullptr, GatewayOptions{}), ConfigError);
}
