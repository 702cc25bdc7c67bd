#pragma once

// On-disk response cache: one JSON file per key under
// <root>/<first two hex digits>/<digest>.json holding {request, result, timestamp}.
// Writes go to a unique temporary file and are renamed into place, so readers
// never see a partial entry.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <thread>

#include <unistd.h>

#include <json.hpp>

#include "reprompt/completion.hpp"

namespace reprompt {

class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path path_for(const CacheKey& key) const {
    return root_ / key.digest.substr(0, 2) / (key.digest + ".json");
  }

  std::optional<CompletionResult> get(const CacheKey& key) const {
    auto path = path_for(key);
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
      auto entry = nlohmann::json::parse(buffer.str());
      auto result = result_from_json(entry.at("result"));
      result.from_cache = true;
      return result;
    } catch (const nlohmann::json::exception& e) {
      throw CacheIOError(std::string("corrupt cache entry ") + path.string() + ": " + e.what(),
                         key.digest);
    }
  }

  void put(const CacheKey& key, const CompletionRequest& request, const CompletionResult& result) {
    auto path = path_for(key);
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw CacheIOError("cannot create " + path.parent_path().string() + ": " + ec.message(), key.digest);

    nlohmann::json entry = {
        {"request", to_json(request)},
        {"result", to_json(result)},
        {"timestamp", std::chrono::duration_cast<std::chrono::seconds>(
                          std::chrono::system_clock::now().time_since_epoch())
                          .count()}};

    std::ostringstream tmp_name;
    tmp_name << key.digest << ".tmp." << ::getpid() << '.' << std::this_thread::get_id() << '.' << counter_++;
    auto tmp = path.parent_path() / tmp_name.str();
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << entry.dump(2) << '\n';
      if (!out) throw CacheIOError("cannot write " + tmp.string(), key.digest);
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
      std::filesystem::remove(tmp);
      throw CacheIOError("cannot rename into " + path.string() + ": " + ec.message(), key.digest);
    }
  }

 private:
  std::filesystem::path root_;
  inline static std::atomic<unsigned long> counter_{0};
};

}  // namespace reprompt
