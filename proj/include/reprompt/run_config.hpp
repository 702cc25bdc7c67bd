#pragma once

// Run configuration file and backend construction.
//
// {
//   "task": "task.json",              relative to the config file
//   "sampler": {...},                 Gibbs settings (see SamplerConfig)
//   "greedy": {...},                  overrides applied on top for greedy runs
//   "backends": {"<id>": {"kind": "scripted_oracle" | "openai_completions" | "openai_chat", ...}},
//   "eval_backends": ["<id>", ...],
//   "cot_file": "prompts/task.txt",   optional
//   "cot_answer_pattern": "...",      optional
//   "cache_dir": "cache",
//   "out_dir": "runs"
// }
//
// Command-line flags override file values, which override built-in defaults.

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "reprompt/evaluator.hpp"
#include "reprompt/gateway.hpp"
#include "reprompt/http_backend.hpp"
#include "reprompt/http_transport.hpp"
#include "reprompt/oracle.hpp"
#include "reprompt/sampler_config.hpp"
#include "reprompt/task.hpp"

namespace reprompt {

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::filesystem::path task_path;
  SamplerConfig gibbs = SamplerConfig::gibbs_defaults();
  SamplerConfig greedy = SamplerConfig::greedy_defaults();
  nlohmann::json backends = nlohmann::json::object();
  std::vector<std::string> eval_backends;
  std::optional<std::filesystem::path> cot_file;
  std::string cot_answer_pattern{kDefaultCotAnswerPattern};
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path out_dir = "runs";

  const SamplerConfig& sampler(SearchMode mode) const { return mode == SearchMode::kGreedy ? greedy : gibbs; }
  SamplerConfig& sampler(SearchMode mode) { return mode == SearchMode::kGreedy ? greedy : gibbs; }

  CotFileOptions cot_options() const {
    CotFileOptions o;
    o.path = cot_file;
    o.answer_pattern = cot_answer_pattern;
    return o;
  }
};

inline std::filesystem::path resolve_against(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  RunConfig c;
  try {
    if (j.contains("task")) c.task_path = resolve_against(base_dir, j.at("task").get<std::string>());
    if (j.contains("sampler")) c.gibbs = sampler_config_from_json(j.at("sampler"), c.gibbs);
    // Greedy inherits the shared sampler fields but keeps its own round count.
    auto shared = j.value("sampler", nlohmann::json::object());
    shared.erase("max_iterations");
    c.greedy = sampler_config_from_json(shared, c.greedy);
    if (j.contains("greedy")) c.greedy = sampler_config_from_json(j.at("greedy"), c.greedy);
    if (j.contains("backends")) c.backends = j.at("backends");
    if (!c.backends.is_object()) throw ConfigError("\"backends\" must be an object keyed by backend id");
    c.eval_backends = j.value("eval_backends", c.eval_backends);
    if (j.contains("cot_file")) c.cot_file = resolve_against(base_dir, j.at("cot_file").get<std::string>());
    c.cot_answer_pattern = j.value("cot_answer_pattern", c.cot_answer_pattern);
    if (j.contains("cache_dir")) c.cache_dir = resolve_against(base_dir, j.at("cache_dir").get<std::string>());
    if (j.contains("out_dir")) c.out_dir = resolve_against(base_dir, j.at("out_dir").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = read_json_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

// The reproducibility-relevant part of a run: no output locations.
inline nlohmann::json describe(const RunConfig& c, SearchMode mode) {
  return {{"task", c.task_path.generic_string()},
          {"sampler", to_json(c.sampler(mode))},
          {"backends", c.backends}};
}

inline RemoteBackendOptions remote_options(const nlohmann::json& b, ApiKind kind) {
  RemoteBackendOptions o;
  o.kind = kind;
  o.model = b.at("model").get<std::string>();
  o.max_concurrency = b.value("max_concurrency", o.max_concurrency);
  o.min_interval = std::chrono::milliseconds(b.value("min_interval_ms", 0));
  o.retry.max_attempts = b.value("max_attempts", o.retry.max_attempts);
  o.retry.initial_backoff = std::chrono::milliseconds(b.value("initial_backoff_ms", 1000));
  o.api_key_env = b.value("api_key_env", o.api_key_env);
  return o;
}

inline std::shared_ptr<Backend> make_backend(const std::string& id, const nlohmann::json& b,
                                             const TaskBundle& task) {
  try {
    const auto kind = b.at("kind").get<std::string>();
    if (kind == "scripted_oracle") {
      auto spec = oracle_spec_from_json(b);
      spec.learn_task(task);
      return std::make_shared<ScriptedOracle>(std::move(spec));
    }
    if (kind == "openai_completions" || kind == "openai_chat") {
      auto transport = std::make_shared<HttplibTransport>(
          b.value("base_url", std::string("https://api.openai.com/v1")),
          std::chrono::seconds(b.value("timeout_s", 120)));
      return std::make_shared<RemoteBackend>(std::move(transport), remote_options(b, api_kind_from_string(kind)));
    }
    throw ConfigError("backend " + id + ": unknown kind \"" + kind + "\"");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("backend " + id + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("backend " + id + ": " + e.what());
  }
}

inline void register_backends(Gateway& gateway, const RunConfig& config, const TaskBundle& task) {
  for (const auto& [id, b] : config.backends.items()) gateway.register_backend(id, make_backend(id, b, task));
}

inline void require_backend(const Gateway& gateway, const std::string& id) {
  if (!gateway.has_backend(id)) throw ConfigError("backend \"" + id + "\" is not configured");
}

}  // namespace reprompt
