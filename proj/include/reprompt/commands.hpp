#pragma once

// Command implementations behind tools/reprompt. Each command that produces
// artifacts writes them into a fresh run directory <out_dir>/<run_id>/ and
// prints a one-line summary.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "reprompt/digest.hpp"
#include "reprompt/evaluator.hpp"
#include "reprompt/gateway.hpp"
#include "reprompt/greedy.hpp"
#include "reprompt/ingest.hpp"
#include "reprompt/run_config.hpp"
#include "reprompt/sampler.hpp"

namespace reprompt {

struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> backends;
  std::vector<std::string> methods;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::size_t> train_size;
  std::optional<std::filesystem::path> cot_file;
  std::optional<std::string> run_id;
  std::optional<std::filesystem::path> prompt;  // prompt.json from select-prompt
  std::optional<std::filesystem::path> run;     // prior run directory
  std::optional<std::filesystem::path> input;   // positional input file
  std::optional<std::filesystem::path> reserved;
  std::optional<std::size_t> max_iterations;
  bool no_cache = false;
};

// Flags over file over defaults.
inline RunConfig resolve_config(const CommandOptions& o) {
  RunConfig c = o.config ? load_run_config(*o.config) : RunConfig{};
  if (o.seed) {
    c.gibbs.seed = *o.seed;
    c.greedy.seed = *o.seed;
  }
  if (o.max_iterations) {
    c.gibbs.max_iterations = *o.max_iterations;
    c.greedy.max_iterations = *o.max_iterations;
  }
  if (o.out) c.out_dir = *o.out;
  if (o.cache_dir) c.cache_dir = *o.cache_dir;
  if (o.cot_file) c.cot_file = *o.cot_file;
  if (!o.backends.empty()) c.eval_backends = o.backends;
  if (c.task_path.empty()) throw ConfigError("no task file: set \"task\" in the config");
  return c;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return s.str();
}

// Creates a new run directory; never reuses an existing one.
inline std::filesystem::path make_run_dir(const std::filesystem::path& out_dir, const std::string& command,
                                          const nlohmann::json& described,
                                          const std::optional<std::string>& run_id) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  if (run_id) {
    auto dir = out_dir / *run_id;
    if (!fs::create_directory(dir)) throw ConfigError("run directory already exists: " + dir.string());
    return dir;
  }
  const auto base = command + "-" + utc_timestamp() + "-" + sha256_hex(described.dump()).substr(0, 8);
  for (int n = 1;; ++n) {
    auto dir = out_dir / (n == 1 ? base : base + "-" + std::to_string(n));
    if (fs::create_directory(dir)) return dir;
  }
}

inline std::unique_ptr<Gateway> make_gateway(const RunConfig& c, const TaskBundle& task, bool use_cache) {
  auto gateway = use_cache ? std::make_unique<Gateway>(c.cache_dir) : std::make_unique<Gateway>();
  register_backends(*gateway, c, task);
  return gateway;
}

inline std::string fmt3(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << v;
  return s.str();
}

// ---- ingest ---------------------------------------------------------------

inline int cmd_ingest(const CommandOptions& o, std::ostream& out) {
  if (!o.input) throw ConfigError("ingest needs an input Big-Bench JSON file");
  if (!o.out) throw ConfigError("ingest needs --out <task.json>");
  if (std::filesystem::exists(*o.out)) throw ConfigError("refusing to overwrite " + o.out->string());
  const auto source = read_json_file(*o.input);
  std::optional<nlohmann::json> reserved;
  if (o.reserved) reserved = read_json_file(*o.reserved);
  const auto name = source.value("name", o.input->stem().string());
  auto task = ingest(source, name, o.train_size.value_or(20), o.seed.value_or(0), reserved);
  task.provenance["source"] = o.input->filename().string();
  write_json_file(*o.out, to_json(task));
  out << "ingest task=" << task.task_name << " train=" << task.train.size() << " test=" << task.test.size()
      << " topped_up=" << task.provenance.at("topped_up_from_reserved").get<std::size_t>()
      << " out=" << o.out->string() << '\n';
  return 0;
}

// ---- synthetic task -------------------------------------------------------

inline int cmd_make_synthetic(const CommandOptions& o, std::size_t n_train, std::size_t n_test,
                              std::ostream& out) {
  if (!o.out) throw ConfigError("make-synthetic needs --out <task.json>");
  if (std::filesystem::exists(*o.out)) throw ConfigError("refusing to overwrite " + o.out->string());
  auto task = make_synthetic_task(n_train, n_test, o.seed.value_or(0));
  task.provenance = {{"generator", "synthetic"}, {"seed", o.seed.value_or(0)}};
  write_json_file(*o.out, to_json(task));
  out << "make-synthetic train=" << n_train << " test=" << n_test << " out=" << o.out->string() << '\n';
  return 0;
}

// ---- sampling runs --------------------------------------------------------

inline int cmd_run(SearchMode mode, const CommandOptions& o, std::ostream& out) {
  const auto c = resolve_config(o);
  const auto task = load_task(c.task_path);
  const auto& sampler = c.sampler(mode);
  auto gateway = make_gateway(c, task, !o.no_cache);
  require_backend(*gateway, sampler.init_backend);
  require_backend(*gateway, sampler.sampling_backend);
  sampler.validate(task.train.size(), mode);

  const auto described = describe(c, mode);
  const auto command = mode == SearchMode::kGreedy ? "run-greedy" : "run-gibbs";
  const auto dir = make_run_dir(c.out_dir, command, described, o.run_id);
  write_json_file(dir / "config.json", described);
  DirectoryRunSink sink(dir);

  RunLog log;
  RecipePool pool(task.train, 1);
  std::string detail;
  if (mode == SearchMode::kGreedy) {
    auto r = run_greedy(task, sampler, *gateway, &sink, described);
    log = std::move(r.log);
    pool = std::move(r.pool);
    detail = " rounds=" + std::to_string(sampler.max_iterations) +
             " top_k_mean=" + fmt3(log.rounds.empty() ? 0.0 : log.rounds.back().top_k_mean);
  } else {
    auto r = run_gibbs(task, sampler, *gateway, &sink, described);
    log = std::move(r.log);
    pool = std::move(r.pool);
    detail = " iterations=" + std::to_string(r.iterations_run) +
             " stopped_early=" + (r.stopped_early ? "true" : "false");
  }
  write_json_file(dir / "pool-final.json", to_json(pool));
  const auto curve = learning_curve(log.records);
  write_text_file(dir / "curve.csv", curve_csv(curve));

  out << command << " run=" << dir.filename().string() << detail
      << " running_avg=" << fmt3(curve.empty() ? 0.0 : curve.back().running_avg)
      << " non_empty=" << pool.non_empty_count() << "/" << pool.size()
      << " backend_calls=" << gateway->backend_calls() << " cache_hits=" << gateway->cache_hits()
      << " dir=" << dir.string() << '\n';
  return 0;
}

// ---- select-prompt --------------------------------------------------------

inline int cmd_select_prompt(const CommandOptions& o, std::ostream& out) {
  if (!o.run) throw ConfigError("select-prompt needs --run <run directory>");
  const auto c = resolve_config(o);
  const auto task = load_task(c.task_path);
  const auto log = read_run_log(*o.run / "log.jsonl");
  const auto mode_name = log.header.value("mode", std::string("gibbs"));
  const auto mode = mode_name == "greedy" ? SearchMode::kGreedy : SearchMode::kGibbs;
  const auto sampler = sampler_config_from_json(log.header.at("sampler"), c.sampler(mode));
  const auto pool = pool_from_json(read_json_file(*o.run / "pool-final.json"), task.train);
  const auto backend = o.backends.empty() ? sampler.sampling_backend : o.backends.front();

  auto gateway = make_gateway(c, task, !o.no_cache);
  require_backend(*gateway, backend);
  const auto scores = score_pool(pool, task.train, *gateway, backend, sampler.decoding, task.message);
  PromptFile prompt;
  prompt.task_name = task.task_name;
  prompt.method = mode == SearchMode::kGreedy ? Method::kRepromptGreedy : Method::kRepromptGibbs;
  prompt.scored_with = backend;
  prompt.tuples = select_test_tuples(pool, task.train, sampler.num_shots, scores, task.message);

  nlohmann::json described = {{"source_run", o.run->filename().string()}, {"scored_with", backend}};
  const auto dir = make_run_dir(c.out_dir, "select-prompt", described, o.run_id);
  nlohmann::json score_json = nlohmann::json::array();
  for (const auto& s : scores)
    score_json.push_back(s ? nlohmann::json{{"slot_id", s->slot_id}, {"accuracy", s->accuracy},
                                            {"evaluated_on", s->evaluated_on}}
                           : nlohmann::json(nullptr));
  write_json_file(dir / "prompt.json", to_json(prompt));
  write_json_file(dir / "scores.json", score_json);

  out << "select-prompt run=" << dir.filename().string() << " slots=";
  for (std::size_t i = 0; i < prompt.tuples.size(); ++i)
    out << (i ? "," : "") << prompt.tuples[i].slot_id << ':' << fmt3(prompt.tuples[i].score);
  out << " backend_calls=" << gateway->backend_calls() << " cache_hits=" << gateway->cache_hits()
      << " dir=" << dir.string() << '\n';
  return 0;
}

// ---- eval / compare -------------------------------------------------------

inline EvalReport evaluate_method(Method method, const TaskBundle& task, Gateway& gateway,
                                  const std::string& backend, const RunConfig& c,
                                  const std::optional<std::filesystem::path>& prompt_path) {
  if (method == Method::kRepromptGibbs || method == Method::kRepromptGreedy) {
    if (!prompt_path) throw ConfigError(std::string(to_string(method)) + " needs --prompt <prompt.json>");
    const auto prompt = prompt_file_from_json(read_json_file(*prompt_path));
    auto report = evaluate_prompt(shots_of(prompt.tuples), task.test, gateway, backend, c.gibbs.decoding,
                                  task.message);
    report.task_name = task.task_name;
    report.method = method;
    return report;
  }
  return run_baseline(method, task, gateway, backend, c.cot_options(), c.gibbs.decoding);
}

inline std::vector<std::string> eval_backends(const RunConfig& c) {
  if (!c.eval_backends.empty()) return c.eval_backends;
  if (!c.gibbs.sampling_backend.empty()) return {c.gibbs.sampling_backend};
  throw ConfigError("no evaluation backend: pass --backend or set \"eval_backends\"");
}

inline std::string eval_file_name(Method m, const std::string& backend) {
  return "eval-" + std::string(to_string(m)) + "-" + backend + ".json";
}

inline int cmd_eval(const CommandOptions& o, std::ostream& out) {
  const auto c = resolve_config(o);
  const auto task = load_task(c.task_path);
  if (o.methods.size() != 1) throw ConfigError("eval needs exactly one --method");
  const auto method = method_from_string(o.methods.front());
  const auto backend = eval_backends(c).front();
  auto gateway = make_gateway(c, task, !o.no_cache);
  require_backend(*gateway, backend);
  const auto report = evaluate_method(method, task, *gateway, backend, c, o.prompt);

  nlohmann::json described = {{"method", to_string(method)}, {"backend", backend}};
  const auto dir = make_run_dir(c.out_dir, "eval", described, o.run_id);
  write_json_file(dir / eval_file_name(method, backend), to_json(report));
  out << "eval run=" << dir.filename().string() << " method=" << to_string(method) << " backend=" << backend
      << " accuracy=" << fmt3(report.accuracy) << " (" << report.correct_count() << "/" << report.evaluated_on
      << ") backend_calls=" << gateway->backend_calls() << " cache_hits=" << gateway->cache_hits()
      << " dir=" << dir.string() << '\n';
  return 0;
}

inline int cmd_compare(const CommandOptions& o, std::ostream& out) {
  const auto c = resolve_config(o);
  const auto task = load_task(c.task_path);
  const auto backends = eval_backends(c);
  std::vector<Method> methods;
  if (!o.methods.empty()) {
    for (const auto& m : o.methods) methods.push_back(method_from_string(m));
  } else {
    methods = {Method::kZeroShot, Method::kFewShot};
    if (c.cot_file) methods.push_back(Method::kCotFile);
    if (o.prompt) methods.push_back(prompt_file_from_json(read_json_file(*o.prompt)).method);
  }
  auto gateway = make_gateway(c, task, !o.no_cache);
  for (const auto& b : backends) require_backend(*gateway, b);

  std::vector<std::vector<EvalReport>> grid;
  for (auto m : methods) {
    grid.emplace_back();
    for (const auto& b : backends) grid.back().push_back(evaluate_method(m, task, *gateway, b, c, o.prompt));
  }

  nlohmann::json described = {{"methods", nlohmann::json::array()}, {"backends", backends}};
  for (auto m : methods) described["methods"].push_back(to_string(m));
  const auto dir = make_run_dir(c.out_dir, "compare", described, o.run_id);

  std::ostringstream csv;
  csv << "method";
  for (const auto& b : backends) csv << ',' << b;
  csv << '\n';
  nlohmann::json table = {{"task_name", task.task_name}, {"backends", backends}, {"rows", nlohmann::json::array()}};
  for (std::size_t i = 0; i < methods.size(); ++i) {
    csv << to_string(methods[i]);
    nlohmann::json row = {{"method", to_string(methods[i])}, {"accuracy", nlohmann::json::object()}};
    for (std::size_t k = 0; k < backends.size(); ++k) {
      const auto& r = grid[i][k];
      write_json_file(dir / eval_file_name(methods[i], backends[k]), to_json(r));
      csv << ',' << fmt3(r.accuracy);
      row["accuracy"][backends[k]] = r.accuracy;
    }
    csv << '\n';
    table["rows"].push_back(std::move(row));
  }
  write_text_file(dir / "compare.csv", csv.str());
  write_json_file(dir / "compare.json", table);

  out << csv.str();
  out << "compare run=" << dir.filename().string() << " cells=" << methods.size() * backends.size()
      << " backend_calls=" << gateway->backend_calls() << " cache_hits=" << gateway->cache_hits()
      << " dir=" << dir.string() << '\n';
  return 0;
}

// ---- curve ----------------------------------------------------------------

inline int cmd_curve(const CommandOptions& o, std::ostream& out) {
  if (!o.input) throw ConfigError("curve needs a run log path");
  const auto log = read_run_log(*o.input);
  const auto curve = learning_curve(log.records);
  const auto csv = curve_csv(curve);
  if (o.out) {
    if (std::filesystem::exists(*o.out)) throw ConfigError("refusing to overwrite " + o.out->string());
    write_text_file(*o.out, csv);
    out << "curve points=" << curve.size()
        << " final=" << fmt3(curve.empty() ? 0.0 : curve.back().running_avg) << " out=" << o.out->string()
        << '\n';
  } else {
    out << csv;
  }
  return 0;
}

// ---- error reporting ------------------------------------------------------

struct ErrorCategory {
  const char* name;
  int exit_code;
};

inline ErrorCategory categorize(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return {"config", 2};
  if (dynamic_cast<const std::invalid_argument*>(&e)) return {"config", 2};
  if (dynamic_cast<const SchemaError*>(&e)) return {"schema", 3};
  if (dynamic_cast<const InsufficientExamples*>(&e)) return {"insufficient_examples", 3};
  if (dynamic_cast<const InsufficientTuples*>(&e)) return {"insufficient_tuples", 3};
  if (dynamic_cast<const MissingCotFile*>(&e)) return {"missing_cot_file", 3};
  if (dynamic_cast<const LogFormatError*>(&e)) return {"log_format", 3};
  if (dynamic_cast<const AuthError*>(&e)) return {"auth", 4};
  if (dynamic_cast<const RateLimitExhausted*>(&e)) return {"rate_limit", 4};
  if (dynamic_cast<const CacheIOError*>(&e)) return {"cache_io", 4};
  if (dynamic_cast<const OracleParseError*>(&e)) return {"oracle_parse", 4};
  if (dynamic_cast<const GatewayError*>(&e)) return {"backend", 4};
  if (dynamic_cast<const LogInconsistency*>(&e)) return {"log_inconsistency", 5};
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return {"schema", 3};
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return {"io", 1};
  return {"internal", 1};
}

}  // namespace reprompt
