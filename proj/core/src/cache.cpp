#include <fstream>

#include "json.hpp"
#include "sfc/backend.hpp"
#include "sfc/errors.hpp"

namespace sfc {

using nlohmann::json;

namespace {
constexpr const char* kCacheFormat = "sfc-score-cache";
constexpr int kCacheVersion = 1;
}  // namespace

ScoreCache::ScoreCache(std::optional<std::filesystem::path> path) : path_(std::move(path)) {
  if (!path_) return;
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
  if (!std::filesystem::exists(*path_)) {
    std::ofstream out(*path_);
    if (!out) throw IoError("cannot create cache " + path_->string());
    out << json{{"format", kCacheFormat}, {"version", kCacheVersion}}.dump() << '\n';
    return;
  }
  std::ifstream in(*path_);
  if (!in) throw IoError("cannot open cache " + path_->string());
  std::string line;
  std::size_t n = 0;
  std::optional<std::uintmax_t> torn_at;
  for (std::streamoff start = in.tellg(); std::getline(in, line); start = in.tellg()) {
    ++n;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      // A torn final append from an interrupted run; earlier lines are intact.
      if (in.peek() == std::char_traits<char>::eof() && n > 1) {
        torn_at = static_cast<std::uintmax_t>(start);
        break;
      }
      throw ParseError(path_->string(), n, "corrupt cache record");
    }
    if (n == 1) {
      if (j.value("format", "") != kCacheFormat || j.value("version", 0) != kCacheVersion) {
        throw ValidationError(path_->string() + " is not a version-1 sfc score cache");
      }
      continue;
    }
    try {
      entries_.insert_or_assign(j.at("key").get<std::string>(),
                                score_response_from_json(j.at("response").dump()));
    } catch (const json::exception&) {
      throw ParseError(path_->string(), n, "cache record lacks key or response");
    }
  }
  in.close();
  // Drop the torn tail so that later appends start on a fresh line.
  if (torn_at) std::filesystem::resize_file(*path_, *torn_at);
}

std::optional<ScoreResponse> ScoreCache::find(const std::string& key) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ScoreCache::insert(const std::string& key, const ScoreResponse& response) {
  std::lock_guard lock(mu_);
  if (!entries_.emplace(key, response).second) return;
  if (!path_) return;
  std::ofstream out(*path_, std::ios::app);
  if (!out) throw IoError("cannot append to cache " + path_->string());
  out << R"({"key":")" << key << R"(","response":)" << to_json(response) << "}\n";
  out.flush();
}

std::size_t ScoreCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

}  // namespace sfc
