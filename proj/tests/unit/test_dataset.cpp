#include <string>

#include "doctest.h"
#include "sfc/dataset.hpp"
#include "sfc/errors.hpp"
#include "test_support.hpp"

using namespace sfc;
namespace fs = std::filesystem;

namespace {

std::string qa_line(const std::string& id, int n_choices, const std::string& answer = "A") {
  std::string choices;
  for (int c = 0; c < n_choices; ++c) {
    if (c) choices += ",";
    const char label = static_cast<char>('A' + c);
    choices += std::string("{\"text\":\"choice ") + label + "\",\"label\":\"" + label + "\"}";
  }
  return "{\"id\":\"" + id + "\",\"question\":{\"stem\":\"Stem " + id + "?\",\"choices\":[" + choices +
         "]},\"answerKey\":\"" + answer + "\"}\n";
}

void write_qa(const fs::path& file, const std::string& prefix, int n, int n_choices) {
  std::string text;
  for (int i = 0; i < n; ++i) text += qa_line(prefix + std::to_string(i), n_choices);
  test::write_file(file, text);
}

std::string mmlu_rows(int n) {
  std::string text;
  for (int i = 0; i < n; ++i) text += "\"What is " + std::to_string(i) + ", really?\",a,b,\"c \"\"quoted\"\"\",d,B\n";
  return text;
}

}  // namespace

TEST_CASE("profile names") {
  CHECK(parse_profile("obqa") == DatasetProfile::OpenbookQA);
  CHECK(parse_profile("commonsenseqa") == DatasetProfile::CommonsenseQA);
  CHECK(profile_name(DatasetProfile::MMLU) == "mmlu");
  CHECK_THROWS_AS(parse_profile("squad"), ConfigError);
  CHECK(expected_eval_count(DatasetProfile::MMLU) == 1140u);
  CHECK_FALSE(expected_eval_count(DatasetProfile::Canonical));
}

TEST_CASE("OpenbookQA native layout") {
  test::TempDir dir;
  write_qa(dir / "test.jsonl", "t", 500, 4);
  write_qa(dir / "train.jsonl", "tr", 30, 4);
  const auto eval = load_dataset(DatasetProfile::OpenbookQA, dir.path());
  CHECK(eval.size() == 500);
  CHECK(eval[3].id == "t3");
  CHECK(eval[3].question == "Stem t3?");
  CHECK(eval[3].choices.size() == 4);
  CHECK(training_pool(DatasetProfile::OpenbookQA, dir.path()).size() == 30);

  write_qa(dir / "test.jsonl", "t", 499, 4);
  CHECK_THROWS_AS(load_dataset(DatasetProfile::OpenbookQA, dir.path()), ValidationError);
  CHECK(load_dataset(DatasetProfile::OpenbookQA, dir.path(), {false}).size() == 499);
}

TEST_CASE("CommonsenseQA keeps the first 500 dev instances") {
  test::TempDir dir;
  write_qa(dir / "dev_rand_split.jsonl", "d", 1221, 5);
  write_qa(dir / "train_rand_split.jsonl", "tr", 12, 5);
  const auto eval = load_dataset(DatasetProfile::CommonsenseQA, dir.path());
  CHECK(eval.size() == 500);
  CHECK(eval.front().id == "d0");
  CHECK(eval.back().id == "d499");
}

TEST_CASE("choice counts are enforced per profile") {
  test::TempDir dir;
  write_qa(dir / "test.jsonl", "t", 500, 5);
  CHECK_THROWS_AS(load_dataset(DatasetProfile::OpenbookQA, dir.path()), ParseError);
}

TEST_CASE("pool and evaluation ids must be disjoint") {
  test::TempDir dir;
  write_qa(dir / "test.jsonl", "t", 500, 4);
  write_qa(dir / "train.jsonl", "t", 3, 4);
  CHECK_THROWS_AS(training_pool(DatasetProfile::OpenbookQA, dir.path()), ValidationError);
}

TEST_CASE("MMLU: 20 per subject in lexicographic subject order") {
  test::TempDir dir;
  for (const char* s : {"b_subject", "a_subject", "c_subject"}) {
    test::write_file(dir / "test" / (std::string(s) + "_test.csv"), mmlu_rows(25));
    test::write_file(dir / "dev" / (std::string(s) + "_dev.csv"), mmlu_rows(5));
    test::write_file(dir / "val" / (std::string(s) + "_val.csv"), mmlu_rows(2));
  }
  const auto eval = load_dataset(DatasetProfile::MMLU, dir.path(), {false});
  REQUIRE(eval.size() == 60);
  CHECK(eval[0].id == "a_subject/test/0");
  CHECK(eval[20].id == "b_subject/test/0");
  CHECK(eval[59].id == "c_subject/test/19");
  CHECK(eval[0].subject == std::optional<std::string>("a_subject"));
  CHECK(eval[0].question == "What is 0, really?");
  CHECK(eval[0].choices[2].text == "c \"quoted\"");
  CHECK(eval[0].answer_label == "B");
  CHECK_THROWS_AS(load_dataset(DatasetProfile::MMLU, dir.path()), ValidationError);
  const auto pool = training_pool(DatasetProfile::MMLU, dir.path(), {false});
  CHECK(pool.size() == 3 * (5 + 2));
}

TEST_CASE("MMLU rows with the wrong arity are rejected with a line number") {
  test::TempDir dir;
  test::write_file(dir / "x.csv", "q,a,b,c,d,A\nq2,a,b,c,A\n");
  try {
    parse_mmlu_csv(dir / "x.csv", "x", "test");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("CSV parser follows RFC 4180") {
  const auto recs = parse_csv("a,\"b,c\",\"d\"\"e\"\r\n\"multi\nline\",x\n", "mem");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].fields == std::vector<std::string>{"a", "b,c", "d\"e"});
  CHECK(recs[1].fields == std::vector<std::string>{"multi\nline", "x"});
  CHECK(recs[1].line == 2);
  CHECK_THROWS_AS(parse_csv("\"open", "mem"), ParseError);
  CHECK_THROWS_AS(parse_csv("\"a\"b", "mem"), ParseError);
}

TEST_CASE("canonical profile reads eval.jsonl and pool.jsonl") {
  const auto eval = load_dataset(DatasetProfile::Canonical, test::fixture("mini"));
  CHECK(eval.size() == 10);
  const auto pool = training_pool(DatasetProfile::Canonical, test::fixture("mini"));
  CHECK(pool.size() == 8);
  CHECK_THROWS_AS(load_dataset(DatasetProfile::Canonical, test::fixture("does-not-exist")), IoError);
}
