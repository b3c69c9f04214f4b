#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sfc/scoring.hpp"

namespace sfc {

// One multiple-choice question in the dataset-independent schema.
struct Instance {
  std::string id;
  std::string question;
  std::vector<Choice> choices;
  std::string answer_label;
  std::optional<std::string> subject;

  // Index of the choice whose label is answer_label. Throws ValidationError
  // when no choice (or more than one) carries that label.
  std::size_t answer_index() const;
  const Choice& answer() const { return choices[answer_index()]; }

  friend bool operator==(const Instance&, const Instance&) = default;
};

// Canonical line format, schema "sfc.instance/1":
//   {"schema":"sfc.instance/1","id":...,"question":...,
//    "choices":[{"label":...,"text":...},...],"answer_label":...,"subject":...|null}
std::string to_canonical_line(const Instance& instance);
Instance from_canonical_line(std::string_view line, const std::string& source = "<string>",
                             std::size_t line_number = 1);

std::vector<Instance> read_canonical(const std::string& path);
void write_canonical(const std::string& path, const std::vector<Instance>& instances);

}  // namespace sfc
