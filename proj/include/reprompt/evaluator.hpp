#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "reprompt/gateway.hpp"
#include "reprompt/parallel.hpp"
#include "reprompt/pool.hpp"
#include "reprompt/prompt.hpp"
#include "reprompt/run_log.hpp"
#include "reprompt/sampler_config.hpp"
#include "reprompt/task.hpp"

namespace reprompt {

class InsufficientTuples : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class MissingCotFile : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class LogInconsistency : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Method { kZeroShot, kFewShot, kCotFile, kRepromptGibbs, kRepromptGreedy };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::kZeroShot: return "zero_shot";
    case Method::kFewShot: return "few_shot";
    case Method::kCotFile: return "cot_file";
    case Method::kRepromptGibbs: return "reprompt_gibbs";
    case Method::kRepromptGreedy: return "reprompt_greedy";
  }
  return "zero_shot";
}

inline Method method_from_string(std::string_view s) {
  for (auto m : {Method::kZeroShot, Method::kFewShot, Method::kCotFile, Method::kRepromptGibbs,
                 Method::kRepromptGreedy})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown method: " + std::string(s));
}

// Decoding request at evaluation temperature.
inline CompletionRequest eval_request(const std::string& backend, std::string prompt,
                                      const DecodingParams& d) {
  CompletionRequest r;
  r.backend_id = backend;
  r.prompt = std::move(prompt);
  r.max_tokens = d.max_tokens;
  r.top_p = d.top_p;
  r.temperature = d.eval_temperature;
  r.stop_sequences = d.stop;
  r.frequency_penalty = d.frequency_penalty;
  r.presence_penalty = d.presence_penalty;
  return r;
}

// ---- tuple scoring --------------------------------------------------------

struct TupleScore {
  std::size_t slot_id = 0;
  double accuracy = 0.0;
  std::size_t evaluated_on = 0;
};

// Accuracy on every training question except the tuple's own when the tuple
// is the only shot in the prompt. Any gateway error fails the whole score.
inline TupleScore tuple_training_accuracy(const ShotTuple& tuple, std::span<const TaskExample> train,
                                          Gateway& gateway, const std::string& backend,
                                          const DecodingParams& decoding = {},
                                          const InstructionMessage& message = {}) {
  std::vector<const TaskExample*> questions;
  for (const auto& ex : train)
    if (ex.question_text != tuple.question_text) questions.push_back(&ex);
  std::vector<char> correct(questions.size(), 0);
  const std::vector<ShotTuple> shots{tuple};
  parallel_for(questions.size(), gateway.max_concurrency(backend), [&](std::size_t i) {
    auto req = eval_request(backend, assemble_cot_prompt(shots, questions[i]->question_text, message),
                            decoding);
    correct[i] = exact_match(extract_answer(gateway.complete(req).text), questions[i]->gold_answer);
  });
  TupleScore score;
  score.evaluated_on = questions.size();
  const auto hits = static_cast<std::size_t>(std::count(correct.begin(), correct.end(), 1));
  score.accuracy = questions.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(questions.size());
  return score;
}

// Scores every non-empty slot; empty slots stay unscored.
inline std::vector<std::optional<TupleScore>> score_pool(const RecipePool& pool,
                                                         std::span<const TaskExample> train,
                                                         Gateway& gateway, const std::string& backend,
                                                         const DecodingParams& decoding,
                                                         const InstructionMessage& message) {
  std::vector<std::optional<TupleScore>> scores(pool.size());
  for (std::size_t s = 0; s < pool.size(); ++s) {
    if (pool[s].empty()) continue;
    auto score = tuple_training_accuracy(pool.shot(s, train, message), train, gateway, backend,
                                         decoding, message);
    score.slot_id = s;
    scores[s] = score;
  }
  return scores;
}

// ---- test-time selection --------------------------------------------------

struct SelectedTuple {
  std::size_t slot_id = 0;
  std::string example_id;
  double score = 0.0;
  ShotTuple shot;
};

// The K best-scoring non-empty slots, best first. Ties go to the lower slot
// id, then the earlier-born recipe.
inline std::vector<SelectedTuple> select_test_tuples(const RecipePool& pool,
                                                     std::span<const TaskExample> train,
                                                     std::size_t k,
                                                     std::span<const std::optional<TupleScore>> scores,
                                                     const InstructionMessage& message = {}) {
  std::vector<std::size_t> candidates;
  for (std::size_t s = 0; s < pool.size(); ++s) {
    if (pool[s].empty()) continue;
    if (s >= scores.size() || !scores[s]) throw std::invalid_argument("slot " + std::to_string(s) + " is not scored");
    candidates.push_back(s);
  }
  if (candidates.size() < k)
    throw InsufficientTuples("need " + std::to_string(k) + " tuples, pool has " +
                             std::to_string(candidates.size()) + " non-empty slots");
  std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    const double sa = scores[a]->accuracy, sb = scores[b]->accuracy;
    if (sa != sb) return sa > sb;
    if (a != b) return a < b;
    return pool[a].born_iteration < pool[b].born_iteration;
  });
  std::vector<SelectedTuple> out;
  for (std::size_t i = 0; i < k; ++i) {
    auto s = candidates[i];
    out.push_back({s, pool[s].example_id, scores[s]->accuracy, pool.shot(s, train, message)});
  }
  return out;
}

inline std::vector<ShotTuple> shots_of(std::span<const SelectedTuple> selected) {
  std::vector<ShotTuple> shots;
  for (const auto& s : selected) shots.push_back(s.shot);
  return shots;
}

// ---- reports --------------------------------------------------------------

struct Verdict {
  std::string example_id;
  std::optional<std::string> extracted;
  std::string gold;
  bool correct = false;
  std::optional<std::string> error;
};

struct EvalReport {
  std::string task_name;
  Method method = Method::kZeroShot;
  std::string backend_id;
  double accuracy = 0.0;
  std::size_t evaluated_on = 0;
  std::vector<Verdict> verdicts;

  std::size_t correct_count() const {
    return static_cast<std::size_t>(
        std::count_if(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.correct; }));
  }
};

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json verdicts = nlohmann::json::array();
  for (const auto& v : r.verdicts) {
    nlohmann::json j = {{"example_id", v.example_id},
                        {"extracted", v.extracted ? nlohmann::json(*v.extracted) : nlohmann::json()},
                        {"gold", v.gold},
                        {"correct", v.correct}};
    if (v.error) j["error"] = *v.error;
    verdicts.push_back(std::move(j));
  }
  return {{"task_name", r.task_name},
          {"method", to_string(r.method)},
          {"backend_id", r.backend_id},
          {"accuracy", r.accuracy},
          {"evaluated_on", r.evaluated_on},
          {"correct", r.correct_count()},
          {"verdicts", std::move(verdicts)}};
}

using Extractor = std::function<std::optional<std::string>(std::string_view)>;

// Decodes each question at evaluation temperature with prompts from
// `make_prompt`. Gateway failures count as incorrect and are annotated.
template <typename PromptFn>
EvalReport evaluate_with(std::span<const TaskExample> test, Gateway& gateway, const std::string& backend,
                         const DecodingParams& decoding, PromptFn&& make_prompt,
                         const Extractor& extract = extract_answer) {
  EvalReport report;
  report.backend_id = backend;
  report.verdicts.resize(test.size());
  parallel_for(test.size(), gateway.max_concurrency(backend), [&](std::size_t i) {
    auto& v = report.verdicts[i];
    v.example_id = test[i].example_id;
    v.gold = test[i].gold_answer;
    try {
      auto result = gateway.complete(eval_request(backend, make_prompt(test[i]), decoding));
      v.extracted = extract(result.text);
      v.correct = exact_match(v.extracted, v.gold);
    } catch (const GatewayError& e) {
      v.error = e.what();
    }
  });
  report.evaluated_on = test.size();
  report.accuracy = test.empty() ? 0.0
                                 : static_cast<double>(report.correct_count()) /
                                       static_cast<double>(test.size());
  return report;
}

inline EvalReport evaluate_prompt(std::span<const ShotTuple> shots, std::span<const TaskExample> test,
                                  Gateway& gateway, const std::string& backend,
                                  const DecodingParams& decoding = {},
                                  const InstructionMessage& message = {}) {
  return evaluate_with(test, gateway, backend, decoding, [&](const TaskExample& ex) {
    return assemble_cot_prompt(shots, ex.question_text, message);
  });
}

// ---- baselines ------------------------------------------------------------

inline constexpr std::string_view kDefaultCotAnswerPattern = R"(answer is\s+(.+?)\.?[ \t]*(?:\n|$))";

struct CotFileOptions {
  std::optional<std::filesystem::path> path;
  std::string question_template = "\n\nQ: {question}\nA: Let's think step by step.";
  std::string answer_pattern{kDefaultCotAnswerPattern};
};

inline std::string render_cot_file_prompt(std::string_view prefix, std::string_view question,
                                          const CotFileOptions& options) {
  std::string tail = options.question_template;
  const std::string placeholder = "{question}";
  if (auto at = tail.find(placeholder); at != std::string::npos) tail.replace(at, placeholder.size(), question);
  return std::string(prefix) + tail;
}

// First capture group of the first match, trimmed.
inline Extractor regex_extractor(const std::string& pattern) {
  auto re = std::make_shared<std::regex>(pattern, std::regex::ECMAScript);
  return [re](std::string_view text) -> std::optional<std::string> {
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(text.begin(), text.end(), m, *re)) return std::nullopt;
    return trim(m.size() > 1 ? m[1].str() : m[0].str());
  };
}

// Numeric-aware id comparison ("2" < "10").
inline bool id_less(const std::string& a, const std::string& b) {
  auto numeric = [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
  };
  if (numeric(a) && numeric(b) && a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

inline std::vector<std::pair<std::string, std::string>> fewshot_pairs(std::span<const TaskExample> train) {
  std::vector<const TaskExample*> sorted;
  for (const auto& ex : train) sorted.push_back(&ex);
  std::sort(sorted.begin(), sorted.end(),
            [](const TaskExample* a, const TaskExample* b) { return id_less(a->example_id, b->example_id); });
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto* ex : sorted) pairs.emplace_back(ex->question_text, ex->gold_answer);
  return pairs;
}

inline EvalReport run_baseline(Method method, const TaskBundle& task, Gateway& gateway,
                               const std::string& backend, const CotFileOptions& cot = {},
                               const DecodingParams& decoding = {}) {
  EvalReport report;
  switch (method) {
    case Method::kZeroShot:
      report = evaluate_with(task.test, gateway, backend, decoding, [&](const TaskExample& ex) {
        return assemble_cot_prompt({}, ex.question_text, task.message);
      });
      break;
    case Method::kFewShot: {
      const auto pairs = fewshot_pairs(task.train);
      report = evaluate_with(task.test, gateway, backend, decoding, [&](const TaskExample& ex) {
        return assemble_fewshot_prompt(pairs, ex.question_text, task.message);
      });
      break;
    }
    case Method::kCotFile: {
      if (!cot.path) throw MissingCotFile("cot_file baseline needs a prompt file");
      if (!std::filesystem::exists(*cot.path)) throw MissingCotFile("no such file: " + cot.path->string());
      const auto prefix = read_text_file(*cot.path);
      report = evaluate_with(
          task.test, gateway, backend, decoding,
          [&](const TaskExample& ex) { return render_cot_file_prompt(prefix, ex.question_text, cot); },
          regex_extractor(cot.answer_pattern));
      break;
    }
    default:
      throw std::invalid_argument("run_baseline: " + std::string(to_string(method)) + " is not a baseline");
  }
  report.task_name = task.task_name;
  report.method = method;
  return report;
}

// ---- selected prompt file -------------------------------------------------

struct PromptFile {
  std::string task_name;
  Method method = Method::kRepromptGibbs;
  std::string scored_with;
  std::vector<SelectedTuple> tuples;
};

inline nlohmann::json to_json(const PromptFile& p) {
  nlohmann::json tuples = nlohmann::json::array();
  for (const auto& t : p.tuples)
    tuples.push_back({{"slot_id", t.slot_id},
                      {"example_id", t.example_id},
                      {"score", t.score},
                      {"question", t.shot.question_text},
                      {"message", t.shot.message},
                      {"solution", t.shot.solution_text},
                      {"answer", t.shot.answer_text}});
  return {{"task_name", p.task_name},
          {"method", to_string(p.method)},
          {"scored_with", p.scored_with},
          {"tuples", std::move(tuples)}};
}

inline PromptFile prompt_file_from_json(const nlohmann::json& j) {
  PromptFile p;
  p.task_name = j.at("task_name").get<std::string>();
  p.method = method_from_string(j.at("method").get<std::string>());
  p.scored_with = j.value("scored_with", std::string());
  for (const auto& t : j.at("tuples")) {
    SelectedTuple s;
    s.slot_id = t.at("slot_id").get<std::size_t>();
    s.example_id = t.at("example_id").get<std::string>();
    s.score = t.at("score").get<double>();
    s.shot = {t.at("question").get<std::string>(), t.at("message").get<std::string>(),
              t.at("solution").get<std::string>(), t.at("answer").get<std::string>()};
    p.tuples.push_back(std::move(s));
  }
  return p;
}

// ---- learning curves ------------------------------------------------------

struct CurvePoint {
  std::int64_t iteration = 0;
  double running_avg = 0.0;
};

// Recomputes the cumulative average of draw_correct over sampling records and
// checks it against the logged values.
inline std::vector<CurvePoint> learning_curve(std::span<const IterationRecord> records,
                                              double tolerance = 1e-9) {
  std::vector<CurvePoint> curve;
  std::size_t correct = 0, init_correct = 0, init_seen = 0;
  for (const auto& r : records) {
    if (r.iteration < 0) {
      ++init_seen;
      init_correct += r.draw_correct ? 1 : 0;
      const double expected = static_cast<double>(init_correct) / static_cast<double>(init_seen);
      if (std::abs(expected - r.running_avg) > tolerance)
        throw LogInconsistency("initialization record " + std::to_string(init_seen) +
                               ": logged running_avg " + std::to_string(r.running_avg) +
                               " != recomputed " + std::to_string(expected));
      continue;
    }
    correct += r.draw_correct ? 1 : 0;
    const double expected = static_cast<double>(correct) / static_cast<double>(curve.size() + 1);
    if (std::abs(expected - r.running_avg) > tolerance)
      throw LogInconsistency("iteration " + std::to_string(r.iteration) + ": logged running_avg " +
                             std::to_string(r.running_avg) + " != recomputed " +
                             std::to_string(expected));
    curve.push_back({r.iteration, expected});
  }
  return curve;
}

inline std::string curve_csv(std::span<const CurvePoint> curve) {
  std::ostringstream out;
  out << "iteration,running_avg\n" << std::fixed << std::setprecision(3);
  for (const auto& p : curve) out << p.iteration << ',' << p.running_avg << '\n';
  return out.str();
}

}  // namespace reprompt
