#include "doctest.h"
#include "sfc/errors.hpp"
#include "sfc/instance.hpp"
#include "test_support.hpp"

using namespace sfc;

TEST_CASE("canonical line round trip keeps every field") {
  Instance inst{"q1", "What is \"x\"?", {{"A", "one"}, {"B", "twö"}}, "B", "high_school_physics"};
  const std::string line = to_canonical_line(inst);
  CHECK(line.find('\n') == std::string::npos);
  CHECK(from_canonical_line(line) == inst);
  inst.subject.reset();
  CHECK(from_canonical_line(to_canonical_line(inst)) == inst);
}

TEST_CASE("answer index resolves the label") {
  Instance inst{"q", "Q", {{"A", "x"}, {"B", "y"}, {"C", "z"}}, "C", std::nullopt};
  CHECK(inst.answer_index() == 2);
  CHECK(inst.answer().text == "z");
  inst.answer_label = "E";
  CHECK_THROWS_AS(inst.answer_index(), ValidationError);
  inst.choices[1].label = "C";
  inst.answer_label = "C";
  CHECK_THROWS_AS(inst.answer_index(), ValidationError);
}

TEST_CASE("canonical parse errors carry source and line") {
  try {
    from_canonical_line("{\"schema\":\"sfc.instance/1\",\"id\":1}", "file.jsonl", 7);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.source() == "file.jsonl");
    CHECK(e.line() == 7);
    CHECK(std::string(e.what()).rfind("file.jsonl:7:", 0) == 0);
  }
  CHECK_THROWS_AS(from_canonical_line("{\"schema\":\"other/1\"}"), ParseError);
  CHECK_THROWS_AS(from_canonical_line("{not json"), ParseError);
}

TEST_CASE("canonical files read back what was written") {
  test::TempDir dir;
  const std::vector<Instance> items = {
      {"a", "Q1", {{"A", "x"}, {"B", "y"}}, "A", std::nullopt},
      {"b", "Q2", {{"A", "u"}, {"B", "v"}, {"C", "w"}}, "C", std::string("s")},
  };
  const auto path = (dir / "x.jsonl").string();
  write_canonical(path, items);
  CHECK(read_canonical(path) == items);
  test::write_file(dir / "empty.jsonl", "");
  CHECK_THROWS_AS(read_canonical((dir / "empty.jsonl").string()), ParseError);
}
