#include "sfc/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sfc/errors.hpp"

namespace sfc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void validate_instance(const Instance& inst, DatasetProfile profile, const std::string& source,
                       std::size_t line) {
  if (inst.question.empty()) throw ParseError(source, line, "empty question");
  if (const auto want = expected_choice_count(profile); want && inst.choices.size() != *want) {
    throw ParseError(source, line,
                     "expected " + std::to_string(*want) + " choices, found " +
                         std::to_string(inst.choices.size()));
  }
  if (inst.choices.size() < 2) throw ParseError(source, line, "fewer than 2 choices");
  std::set<std::string> labels;
  for (const auto& c : inst.choices) {
    if (c.text.empty()) throw ParseError(source, line, "empty choice text");
    if (!labels.insert(c.label).second) throw ParseError(source, line, "duplicate label " + c.label);
  }
  if (!labels.count(inst.answer_label)) {
    throw ParseError(source, line, "answer '" + inst.answer_label + "' matches no choice label");
  }
}

void enforce_count(DatasetProfile profile, std::size_t got, LoadOptions options) {
  if (!options.enforce_counts) return;
  if (const auto want = expected_eval_count(profile); want && got != *want) {
    throw ValidationError(std::string(profile_name(profile)) + " evaluation split has " +
                          std::to_string(got) + " instances, expected " + std::to_string(*want));
  }
}

// <dir>/<split>/<subject>_<split>.csv, lexicographic by filename.
std::vector<std::pair<std::string, fs::path>> mmlu_files(const fs::path& dir,
                                                         const std::string& split) {
  const fs::path sub = dir / split;
  if (!fs::is_directory(sub)) throw IoError("missing MMLU split directory " + sub.string());
  const std::string suffix = "_" + split + ".csv";
  std::vector<std::pair<std::string, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(sub)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_regular_file() || name.size() <= suffix.size() ||
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
      continue;
    }
    files.emplace_back(name.substr(0, name.size() - suffix.size()), entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.second.filename() < b.second.filename(); });
  if (files.empty()) throw IoError("no *" + suffix + " files in " + sub.string());
  return files;
}

std::vector<Instance> load_eval(DatasetProfile profile, const fs::path& dir) {
  switch (profile) {
    case DatasetProfile::OpenbookQA:
      return parse_qa_jsonl(dir / "test.jsonl");
    case DatasetProfile::CommonsenseQA:
      return parse_qa_jsonl(dir / "dev_rand_split.jsonl", 500);
    case DatasetProfile::MMLU: {
      std::vector<Instance> out;
      for (const auto& [subject, file] : mmlu_files(dir, "test")) {
        auto part = parse_mmlu_csv(file, subject, "test", kMmluPerSubject);
        out.insert(out.end(), part.begin(), part.end());
      }
      return out;
    }
    case DatasetProfile::Canonical:
      return read_canonical((dir / "eval.jsonl").string());
  }
  throw ConfigError("unknown dataset profile");
}

}  // namespace

DatasetProfile parse_profile(std::string_view name) {
  if (name == "openbookqa" || name == "obqa") return DatasetProfile::OpenbookQA;
  if (name == "commonsenseqa" || name == "csqa") return DatasetProfile::CommonsenseQA;
  if (name == "mmlu") return DatasetProfile::MMLU;
  if (name == "canonical") return DatasetProfile::Canonical;
  throw ConfigError("unknown dataset profile '" + std::string(name) + "'");
}

std::string_view profile_name(DatasetProfile profile) {
  switch (profile) {
    case DatasetProfile::OpenbookQA: return "openbookqa";
    case DatasetProfile::CommonsenseQA: return "commonsenseqa";
    case DatasetProfile::MMLU: return "mmlu";
    case DatasetProfile::Canonical: return "canonical";
  }
  return "unknown";
}

std::optional<std::size_t> expected_eval_count(DatasetProfile profile) {
  switch (profile) {
    case DatasetProfile::OpenbookQA: return 500;
    case DatasetProfile::CommonsenseQA: return 500;
    case DatasetProfile::MMLU: return 57 * kMmluPerSubject;
    case DatasetProfile::Canonical: return std::nullopt;
  }
  return std::nullopt;
}

std::optional<std::size_t> expected_choice_count(DatasetProfile profile) {
  switch (profile) {
    case DatasetProfile::OpenbookQA: return 4;
    case DatasetProfile::CommonsenseQA: return 5;
    case DatasetProfile::MMLU: return 4;
    case DatasetProfile::Canonical: return std::nullopt;
  }
  return std::nullopt;
}

std::vector<Instance> parse_qa_jsonl(const fs::path& file, std::optional<std::size_t> limit) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  const std::string source = file.string();
  std::vector<Instance> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (limit && out.size() >= *limit) break;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, n, e.what());
    }
    try {
      Instance inst;
      inst.id = j.at("id").get<std::string>();
      const auto& q = j.at("question");
      inst.question = q.at("stem").get<std::string>();
      for (const auto& c : q.at("choices")) {
        inst.choices.push_back({c.at("label").get<std::string>(), c.at("text").get<std::string>()});
      }
      inst.answer_label = j.at("answerKey").get<std::string>();
      out.push_back(std::move(inst));
    } catch (const json::exception& e) {
      throw ParseError(source, n, e.what());
    }
  }
  if (out.empty()) throw ParseError(source, n, "no records");
  return out;
}

std::vector<CsvRecord> parse_csv(std::string_view text, const std::string& source) {
  std::vector<CsvRecord> records;
  std::size_t line = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    CsvRecord rec;
    rec.line = line;
    std::string field;
    bool in_quotes = false;
    bool quoted = false;
    bool end_of_record = false;
    while (i < text.size() && !end_of_record) {
      const char ch = text[i];
      if (in_quotes) {
        if (ch == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            field += '"';
            i += 2;
            continue;
          }
          in_quotes = false;
          ++i;
          continue;
        }
        if (ch == '\n') ++line;
        field += ch;
        ++i;
        continue;
      }
      switch (ch) {
        case '"':
          if (!field.empty() || quoted) throw ParseError(source, line, "stray quote in field");
          in_quotes = quoted = true;
          ++i;
          break;
        case ',':
          rec.fields.push_back(std::move(field));
          field.clear();
          quoted = false;
          ++i;
          break;
        case '\r':
          ++i;
          break;
        case '\n':
          ++line;
          ++i;
          end_of_record = true;
          break;
        default:
          if (quoted) throw ParseError(source, line, "text after closing quote");
          field += ch;
          ++i;
      }
    }
    if (in_quotes) throw ParseError(source, rec.line, "unterminated quoted field");
    rec.fields.push_back(std::move(field));
    if (!(rec.fields.size() == 1 && rec.fields[0].empty())) records.push_back(std::move(rec));
  }
  return records;
}

std::vector<Instance> parse_mmlu_csv(const fs::path& file, const std::string& subject,
                                     const std::string& split, std::optional<std::size_t> limit) {
  const std::string source = file.string();
  const auto records = parse_csv(read_file(file), source);
  if (records.empty()) throw ParseError(source, 1, "no records");
  static const char* kLabels[] = {"A", "B", "C", "D"};
  std::vector<Instance> out;
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (limit && out.size() >= *limit) break;
    const auto& rec = records[r];
    if (rec.fields.size() != 6) {
      throw ParseError(source, rec.line,
                       "expected 6 fields (question, A-D, answer), found " +
                           std::to_string(rec.fields.size()));
    }
    Instance inst;
    inst.id = subject + "/" + split + "/" + std::to_string(r);
    inst.question = rec.fields[0];
    for (std::size_t c = 0; c < 4; ++c) inst.choices.push_back({kLabels[c], rec.fields[c + 1]});
    inst.answer_label = rec.fields[5];
    inst.subject = subject;
    validate_instance(inst, DatasetProfile::MMLU, source, rec.line);
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instance> load_dataset(DatasetProfile profile, const fs::path& dir,
                                   LoadOptions options) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  auto out = load_eval(profile, dir);
  for (std::size_t i = 0; i < out.size(); ++i) {
    validate_instance(out[i], profile, dir.string(), i + 1);
  }
  enforce_count(profile, out.size(), options);
  return out;
}

void check_disjoint(std::span<const Instance> pool, std::span<const Instance> eval) {
  std::set<std::string> ids;
  for (const auto& inst : eval) ids.insert(inst.id);
  for (const auto& inst : pool) {
    if (ids.count(inst.id)) {
      throw ValidationError("instance '" + inst.id + "' appears in both pool and evaluation split");
    }
  }
}

std::vector<Instance> training_pool(DatasetProfile profile, const fs::path& dir,
                                    LoadOptions options) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  std::vector<Instance> pool;
  switch (profile) {
    case DatasetProfile::OpenbookQA:
      pool = parse_qa_jsonl(dir / "train.jsonl");
      break;
    case DatasetProfile::CommonsenseQA:
      pool = parse_qa_jsonl(dir / "train_rand_split.jsonl");
      break;
    case DatasetProfile::MMLU:
      for (const char* split : {"dev", "val"}) {
        for (const auto& [subject, file] : mmlu_files(dir, split)) {
          auto part = parse_mmlu_csv(file, subject, split);
          pool.insert(pool.end(), part.begin(), part.end());
        }
      }
      break;
    case DatasetProfile::Canonical:
      pool = read_canonical((dir / "pool.jsonl").string());
      break;
  }
  for (std::size_t i = 0; i < pool.size(); ++i) {
    validate_instance(pool[i], profile, dir.string(), i + 1);
  }
  const auto eval = load_dataset(profile, dir, options);
  check_disjoint(pool, eval);
  return pool;
}

}  // namespace sfc
