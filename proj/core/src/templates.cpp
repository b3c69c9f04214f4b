#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sfc/errors.hpp"
#include "sfc/prompt.hpp"

namespace sfc {

using nlohmann::json;

TemplateConfig TemplateConfig::defaults() {
  TemplateConfig cfg;
  cfg.set("openbookqa",
          {std::nullopt, "Let's answer science questions.",
           "The following are elementary-level multiple-choice questions about science. For the "
           "question below, select the most suitable answer from the 4 options given."});
  cfg.set("commonsenseqa",
          {std::nullopt, "Let's answer commonsense reasoning questions.",
           "The following are multiple-choice questions about everyday situations. For the "
           "question below, select the most suitable answer from the 5 options given."});
  cfg.set("mmlu",
          {std::nullopt, "Let's answer questions about {subject}.",
           "The following are multiple-choice questions about {subject}. For the question "
           "below, select the most suitable answer from the 4 options given."});
  return cfg;
}

TemplateConfig TemplateConfig::from_json(std::string_view text) {
  TemplateConfig cfg = defaults();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("templates", 1, e.what());
  }
  if (!j.is_object()) throw ConfigError("template config must be a JSON object");
  for (const auto& [dataset, formats] : j.items()) {
    if (!formats.is_object()) throw ConfigError("templates." + dataset + " must be an object");
    HeaderSet headers;
    if (const auto it = cfg.datasets_.find(dataset); it != cfg.datasets_.end()) headers = it->second;
    for (const auto& [format, value] : formats.items()) {
      auto& slot = [&]() -> std::optional<std::string>& {
        switch (parse_format(format)) {
          case PromptFormat::String: return headers.string;
          case PromptFormat::StringAnswer: return headers.string_answer;
          case PromptFormat::Enumerated: return headers.enumerated;
        }
        return headers.string;
      }();
      if (value.is_null()) {
        slot.reset();
      } else if (value.is_string()) {
        slot = value.get<std::string>();
      } else {
        throw ConfigError("templates." + dataset + "." + format + " must be a string or null");
      }
    }
    cfg.set(dataset, std::move(headers));
  }
  return cfg;
}

TemplateConfig TemplateConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

}  // namespace sfc
