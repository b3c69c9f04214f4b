#include "sfc/instance.hpp"

#include <fstream>

#include "json.hpp"
#include "sfc/errors.hpp"

namespace sfc {

using nlohmann::json;

namespace {
constexpr const char* kSchema = "sfc.instance/1";
}

std::size_t Instance::answer_index() const {
  std::size_t found = choices.size();
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (choices[i].label == answer_label) {
      if (found != choices.size()) {
        throw ValidationError(id + ": answer label '" + answer_label + "' is ambiguous");
      }
      found = i;
    }
  }
  if (found == choices.size()) {
    throw ValidationError(id + ": answer label '" + answer_label + "' matches no choice");
  }
  return found;
}

std::string to_canonical_line(const Instance& instance) {
  json j;
  j["schema"] = kSchema;
  j["id"] = instance.id;
  j["question"] = instance.question;
  json choices = json::array();
  for (const auto& c : instance.choices) choices.push_back({{"label", c.label}, {"text", c.text}});
  j["choices"] = std::move(choices);
  j["answer_label"] = instance.answer_label;
  j["subject"] = instance.subject ? json(*instance.subject) : json(nullptr);
  return j.dump();
}

Instance from_canonical_line(std::string_view line, const std::string& source,
                             std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(source, line_number, e.what());
  }
  try {
    if (j.at("schema") != kSchema) {
      throw ParseError(source, line_number, "unsupported schema " + j.at("schema").dump());
    }
    Instance inst;
    inst.id = j.at("id").get<std::string>();
    inst.question = j.at("question").get<std::string>();
    for (const auto& c : j.at("choices")) {
      inst.choices.push_back({c.at("label").get<std::string>(), c.at("text").get<std::string>()});
    }
    inst.answer_label = j.at("answer_label").get<std::string>();
    if (j.contains("subject") && !j["subject"].is_null()) {
      inst.subject = j["subject"].get<std::string>();
    }
    return inst;
  } catch (const json::exception& e) {
    throw ParseError(source, line_number, e.what());
  }
}

std::vector<Instance> read_canonical(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Instance> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    out.push_back(from_canonical_line(line, path, n));
  }
  if (out.empty()) throw ParseError(path, n, "no records");
  return out;
}

void write_canonical(const std::string& path, const std::vector<Instance>& instances) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& inst : instances) out << to_canonical_line(inst) << '\n';
}

}  // namespace sfc
