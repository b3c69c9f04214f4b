#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "doctest.h"
#include "mock_server.hpp"
#include "test_support.hpp"

using json = nlohmann::json;
namespace cli = sfc::cli;
namespace test = sfc::test;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result sfc_run(std::vector<std::string> args) {
  args.insert(args.begin(), "sfc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string mini() { return test::fixture("mini").string(); }

}  // namespace

TEST_CASE("evaluate on the mini fixture") {
  test::TempDir dir;
  const auto out_dir = (dir / "out").string();
  const auto r = sfc_run({"evaluate", "--dataset", mini(), "--format", "enumerated", "--shots", "0", "4",
                          "--seeds", "0", "1", "--sfc-free", "--out", out_dir});
  INFO(r.err);
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.find("tabular mini enumerated k=0: accuracy ") != std::string::npos);
  CHECK(r.out.find("tabular mini enumerated k=4: accuracy ") != std::string::npos);
  for (const char* f : {"instances.jsonl", "summary.csv", "plot_data.csv", "run_meta.json", "effective_config.json"}) {
    CHECK(std::filesystem::exists(dir / ("out/" + std::string(f))));
  }
  const auto cfg = json::parse(test::read_file(dir / "out/effective_config.json"));
  CHECK(cfg["format"] == "enumerated");
  CHECK(cfg["shots"] == json::array({0, 4}));

  // Same inputs, same bytes.
  const auto again = sfc_run({"evaluate", "--dataset", mini(), "--format", "enumerated", "--shots", "0", "4",
                              "--seeds", "0", "1", "--sfc-free", "--out", (dir / "out2").string()});
  CHECK(again.code == 0);
  CHECK(test::read_file(dir / "out/summary.csv") == test::read_file(dir / "out2/summary.csv"));
  CHECK(test::read_file(dir / "out/instances.jsonl") == test::read_file(dir / "out2/instances.jsonl"));

  // The report subcommand rebuilds the same tables.
  const auto rep = sfc_run({"report", "--in", (dir / "out/instances.jsonl").string(), "--out", (dir / "rep").string()});
  CHECK(rep.code == 0);
  CHECK(test::read_file(dir / "rep/summary.csv") == test::read_file(dir / "out/summary.csv"));
}

TEST_CASE("a config file supplies defaults that flags override") {
  test::TempDir dir;
  test::write_file(dir / "run.json", json{{"dataset", {{"path", mini()}}},
                                          {"format", "string_answer"},
                                          {"model_name", "from-config"},
                                          {"out", (dir / "cfg-out").string()}}
                                         .dump());
  const auto r = sfc_run({"evaluate", "--config", (dir / "run.json").string(), "--model-name", "flag"});
  CHECK(r.code == 0);
  CHECK(r.out.find("flag mini string_answer k=0") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "cfg-out/summary.csv"));
}

TEST_CASE("usage errors exit 2 and write nothing") {
  test::TempDir dir;
  const auto out_dir = (dir / "out").string();
  const auto missing = sfc_run({"evaluate", "--dataset", (dir / "nope").string(), "--out", out_dir});
  CHECK(missing.code == cli::kExitUsage);
  CHECK(missing.err.find("dataset directory not found") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(out_dir));

  CHECK(sfc_run({"evaluate", "--bogus"}).code == cli::kExitUsage);
  CHECK(sfc_run({}).code == cli::kExitUsage);
  CHECK(sfc_run({"evaluate", "--dataset", mini(), "--shots", "9", "--out", out_dir}).code == cli::kExitUsage);
  CHECK(sfc_run({"evaluate", "--dataset", mini(), "--format", "essay", "--out", out_dir}).code == cli::kExitUsage);
  CHECK_FALSE(std::filesystem::exists(out_dir));
  CHECK(sfc_run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("off-grid shot counts warn but run") {
  test::TempDir dir;
  const auto r = sfc_run({"evaluate", "--dataset", mini(), "--shots", "3", "--out", (dir / "o").string()});
  CHECK(r.code == 0);
  CHECK(r.err.find("warning: --shots 3 is outside the standard grid") != std::string::npos);
}

TEST_CASE("ablate writes one run per tag") {
  test::TempDir dir;
  const auto r = sfc_run({"ablate", "--dataset", mini(), "--tags", "none", "q", "--out", (dir / "a").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("tag=none") != std::string::npos);
  CHECK(r.out.find("tag=q:") != std::string::npos);
}

TEST_CASE("render reproduces the golden prompts") {
  const auto prompts = test::fixture("prompts");
  const auto golden = test::source_dir() / "golden";
  struct Case {
    const char* ds;
    const char* name;
    const char* format;
    const char* file;
  };
  const Case cases[] = {{"obqa", "openbookqa", "string", "string"},
                        {"obqa", "openbookqa", "string_answer", "string_answer"},
                        {"obqa", "openbookqa", "enumerated", "enumerated"},
                        {"csqa", "commonsenseqa", "string", "string"},
                        {"csqa", "commonsenseqa", "string_answer", "string_answer"},
                        {"csqa", "commonsenseqa", "enumerated", "enumerated"}};
  for (const auto& c : cases) {
    for (const char* k : {"0", "4"}) {
      const std::string ds = c.ds;
      std::vector<std::string> args = {"render", "--instances", (prompts / (ds + "_test.jsonl")).string(),
                                       "--dataset-name", c.name, "--format", c.format, "--shots", k};
      if (std::string(k) != "0") {
        args.push_back("--demos");
        args.push_back((prompts / (ds + "_demos.jsonl")).string());
      }
      const auto r = sfc_run(args);
      CAPTURE(c.file);
      CAPTURE(k);
      CHECK(r.code == 0);
      CHECK(r.out == test::read_file(golden / (ds + "_" + c.file + "_k" + k + ".txt")));
    }
  }
}

TEST_CASE("render targets and ablation contexts") {
  const auto file = test::fixture("mini/eval.jsonl").string();
  auto r = sfc_run({"render", "--instances", file, "--format", "enumerated", "--target", "2"});
  CHECK(r.out == "C");
  r = sfc_run({"render", "--instances", file, "--format", "enumerated", "--target", "2", "--spacing", "leading-space"});
  CHECK(r.out == " C");
  r = sfc_run({"render", "--instances", file, "--ablation", "none"});
  CHECK(r.code == 0);
  CHECK(r.out.empty());
  r = sfc_run({"render", "--instances", file, "--id", "mini-1", "--ablation", "q"});
  CHECK(r.out.find("What colour is the clear sky?") != std::string::npos);
  CHECK(sfc_run({"render", "--instances", file, "--id", "nope"}).code == cli::kExitUsage);
  CHECK(sfc_run({"render", "--instances", file, "--target", "9"}).code == cli::kExitUsage);
  CHECK(sfc_run({"render", "--instances", file, "--shots", "2"}).code == cli::kExitUsage);
  r = sfc_run({"render", "--instances", file, "--shots", "2", "--pool", test::fixture("mini/pool.jsonl").string(),
               "--seed", "3"});
  CHECK(r.code == 0);
  CHECK(r.out.find("Name the colour of") != std::string::npos);
}

TEST_CASE("simulate") {
  auto r = sfc_run({"simulate", "--demo"});
  CHECK(r.code == 0);
  CHECK(r.out.find("vulnerable") != std::string::npos);
  CHECK(r.out.find("certified safe") != std::string::npos);
  r = sfc_run({"simulate", "--instances", "200", "--seed", "4"});
  CHECK(r.code == 0);
  r = sfc_run({"simulate", "--instances", "5", "--max-choices", "12", "--step", "0.001"});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("hint: try --step") != std::string::npos);
}

TEST_CASE("remote transport failures exit 3") {
  test::MockCompletionsServer server;
  server.fail_matching("tomato", 503, -1);
  test::TempDir dir;
  test::write_file(dir / "run.json", json{{"backend",
                                           {{"kind", "remote"},
                                            {"base_url", server.base_url()},
                                            {"model", "mock"}}}}
                                         .dump());
  const auto r = sfc_run({"evaluate", "--config", (dir / "run.json").string(), "--dataset", mini(), "--out",
                          (dir / "o").string()});
  CHECK(r.code == cli::kExitBackend);
  CHECK(r.out.find("[INVALID]") != std::string::npos);
  const auto meta = json::parse(test::read_file(dir / "o/run_meta.json"));
  CHECK(meta["valid"] == false);
}

TEST_CASE("invalid run without backend failures exits 1") {
  test::TempDir dir;
  // The model has no context for the extra question, so it fails as a bad request.
  std::string eval = test::read_file(test::fixture("mini/eval.jsonl"));
  eval += R"({"schema": "sfc.instance/1", "id": "extra", "question": "Unknown question?", "choices": [{"label": "A", "text": "red"}, {"label": "B", "text": "blue"}], "answer_label": "A", "subject": null})";
  eval += "\n";
  std::filesystem::create_directories(dir / "ds");
  test::write_file(dir / "ds/eval.jsonl", eval);
  const auto r = sfc_run({"evaluate", "--dataset", (dir / "ds").string(), "--model-file",
                          test::fixture("mini/model.json").string(), "--out", (dir / "o").string()});
  CHECK(r.code == cli::kExitInvalidRun);
}
