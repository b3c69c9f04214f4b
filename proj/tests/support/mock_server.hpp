#pragma once

// In-process HTTP server speaking the completions-with-logprobs wire format,
// for exercising RemoteBackend without a model.
//
// Tokenization: a token is a run of non-space characters, optionally with one
// leading space; "\n" and stray spaces are single tokens. Token logprobs are a
// fixed function of the token text, and the first token of every echo has no
// logprob, as with real providers.

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace sfc::test {

class MockCompletionsServer {
 public:
  MockCompletionsServer();
  ~MockCompletionsServer();
  MockCompletionsServer(const MockCompletionsServer&) = delete;
  MockCompletionsServer& operator=(const MockCompletionsServer&) = delete;

  std::string base_url() const;  // http://127.0.0.1:<port>/v1

  static std::vector<std::string> tokenize(std::string_view text);
  static double token_logprob(std::string_view token);

  // The next `n` requests are answered with `status`.
  void fail_next(int n, int status);
  // Requests whose prompt contains `needle` fail with `status`, `times` times
  // (negative = always).
  void fail_matching(std::string needle, int status, int times);
  void set_omit_logprobs(bool omit) { omit_logprobs_ = omit; }
  void set_required_key(std::string key);

  int requests() const { return requests_.load(); }
  std::vector<std::string> bodies() const;

 private:
  struct Rule {
    std::string needle;
    int status;
    int remaining;
  };

  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  std::atomic<bool> omit_logprobs_{false};
  mutable std::mutex mu_;
  int fail_next_ = 0;
  int fail_status_ = 503;
  std::vector<Rule> rules_;
  std::string required_key_;
  std::vector<std::string> bodies_;
};

}  // namespace sfc::test
