#pragma once

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "reprompt/gateway.hpp"
#include "reprompt/oracle.hpp"
#include "reprompt/task.hpp"

namespace testing_support {

inline std::filesystem::path test_dir() { return REPROMPT_TEST_DIR; }

inline std::string golden(const std::string& name) {
  return reprompt::read_text_file(test_dir() / "golden" / name);
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "reprompt-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

// Backend driven by a callback.
class FnBackend : public reprompt::Backend {
 public:
  using Fn = std::function<reprompt::CompletionResult(const reprompt::CompletionRequest&)>;
  explicit FnBackend(Fn fn, std::size_t concurrency = 1) : fn_(std::move(fn)), concurrency_(concurrency) {}
  reprompt::CompletionResult complete(const reprompt::CompletionRequest& r, const std::string&) override {
    return fn_(r);
  }
  std::size_t max_concurrency() const override { return concurrency_; }

 private:
  Fn fn_;
  std::size_t concurrency_;
};

inline reprompt::CompletionResult text(std::string t) {
  return {std::move(t), reprompt::FinishReason::kStop, false};
}

inline std::shared_ptr<reprompt::ScriptedOracle> oracle_for(const reprompt::TaskBundle& task,
                                                            reprompt::OracleSpec spec = {}) {
  spec.learn_task(task);
  return std::make_shared<reprompt::ScriptedOracle>(std::move(spec));
}

}  // namespace testing_support
