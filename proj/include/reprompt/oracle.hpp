#pragma once

// Scripted oracle: a deterministic stand-in language model for offline runs.
//
// Recipes carry a style marker ("#good" / "#bad"). The oracle parses the
// prompt back into shots, picks one shot's style uniformly at random and
// imitates it: the emitted recipe carries the same marker, and the answer is
// correct with probability style_accuracy[style]. With no shots to imitate it
// answers at the NONE rate and invents a marker. All randomness is a pure
// function of (seed, request digest, draw index).

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "reprompt/backend.hpp"
#include "reprompt/digest.hpp"
#include "reprompt/prompt.hpp"
#include "reprompt/rng.hpp"
#include "reprompt/task.hpp"

namespace reprompt {

enum class Style { kGood, kBad, kNone };

inline constexpr std::string_view kGoodMarker = "#good";
inline constexpr std::string_view kBadMarker = "#bad";

inline std::string_view to_string(Style s) {
  switch (s) {
    case Style::kGood: return "GOOD";
    case Style::kBad: return "BAD";
    case Style::kNone: return "NONE";
  }
  return "NONE";
}

inline Style style_from_string(std::string_view s) {
  if (s == "GOOD") return Style::kGood;
  if (s == "BAD") return Style::kBad;
  if (s == "NONE") return Style::kNone;
  throw std::invalid_argument("unknown style: " + std::string(s));
}

inline Style classify_recipe(std::string_view solution) {
  if (solution.find(kGoodMarker) != std::string_view::npos) return Style::kGood;
  if (solution.find(kBadMarker) != std::string_view::npos) return Style::kBad;
  return Style::kNone;
}

struct OracleSpec {
  std::uint64_t seed = 0;
  std::map<Style, double> style_accuracy{
      {Style::kGood, 0.9}, {Style::kBad, 0.1}, {Style::kNone, 0.05}};
  // Marker invented for a NONE-style draw.
  double invent_good_probability = 0.5;
  // Chance of disregarding the shots and answering as if zero-shot.
  double ignore_shots_probability = 0.0;
  InstructionMessage message;
  std::unordered_map<std::string, std::string> answer_key;  // question -> gold answer
  std::vector<std::string> answer_alphabet;

  double accuracy(Style s) const { return style_accuracy.at(s); }

  void validate() const {
    auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
    for (auto s : {Style::kGood, Style::kBad, Style::kNone}) {
      if (!style_accuracy.contains(s) || !in_unit(style_accuracy.at(s)))
        throw std::invalid_argument("oracle style_accuracy must be in [0,1] for every style");
    }
    if (!in_unit(invent_good_probability) || !in_unit(ignore_shots_probability))
      throw std::invalid_argument("oracle probabilities must be in [0,1]");
  }

  // Answer key and alphabet from every example of a task.
  void learn_task(const TaskBundle& task) {
    message = task.message;
    std::vector<std::string> alphabet;
    for (const auto* split : {&task.train, &task.test}) {
      for (const auto& ex : *split) {
        answer_key[ex.question_text] = ex.gold_answer;
        if (std::find(alphabet.begin(), alphabet.end(), ex.gold_answer) == alphabet.end())
          alphabet.push_back(ex.gold_answer);
      }
    }
    std::sort(alphabet.begin(), alphabet.end());
    answer_alphabet = std::move(alphabet);
  }
};

// What the oracle decided for one request; exposed for tests.
struct OracleDraw {
  Style imitated = Style::kNone;
  Style emitted = Style::kNone;
  bool correct = false;
  std::string answer;
  std::string text;
};

class ScriptedOracle : public Backend {
 public:
  explicit ScriptedOracle(OracleSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  const OracleSpec& spec() const { return spec_; }

  OracleDraw draw(const CompletionRequest& request, const std::string& digest) const {
    std::vector<Style> styles;
    std::string question;
    if (auto cot = parse_cot_prompt(request.prompt, spec_.message)) {
      for (const auto& shot : cot->shots) styles.push_back(classify_recipe(shot.solution_text));
      question = std::move(cot->test_question);
    } else if (auto fewshot = parse_fewshot_prompt(request.prompt, spec_.message)) {
      question = std::move(fewshot->test_question);
    } else {
      throw OracleParseError("prompt does not match the assembly grammar", digest);
    }

    auto gold = spec_.answer_key.find(question);
    if (gold == spec_.answer_key.end())
      throw BackendError("scripted oracle has no answer for question: " + question.substr(0, 60),
                         digest);

    Rng rng(spec_.seed ^ splitmix64(digest_prefix_u64(digest)) ^
            splitmix64(request.effective_draw_index() + 0x5bd1e995ULL));
    OracleDraw d;
    const bool ignore = rng.uniform01() < spec_.ignore_shots_probability;
    if (styles.empty() || ignore) {
      d.imitated = Style::kNone;
    } else {
      d.imitated = styles[rng.uniform_index(styles.size())];
    }
    if (d.imitated == Style::kNone) {
      d.emitted = rng.uniform01() < spec_.invent_good_probability ? Style::kGood : Style::kBad;
    } else {
      d.emitted = d.imitated;
    }
    d.correct = rng.uniform01() < spec_.accuracy(d.imitated);
    if (d.correct) {
      d.answer = gold->second;
    } else {
      std::vector<std::string_view> wrong;
      for (const auto& a : spec_.answer_alphabet)
        if (a != gold->second) wrong.push_back(a);
      d.answer = wrong.empty() ? std::string("not-" + gold->second)
                               : std::string(wrong[rng.uniform_index(wrong.size())]);
    }

    const auto marker = d.emitted == Style::kGood ? kGoodMarker : kBadMarker;
    d.text = std::string(marker) + " Restating the question: " + question + "\n" +
             "Working through it with the " + std::string(marker.substr(1)) + " routine.\n" +
             std::string(kAnswerOpen) + d.answer + std::string(kAnswerClose) + "\n" +
             std::string(kStopWord);
    return d;
  }

  CompletionResult complete(const CompletionRequest& request, const std::string& digest) override {
    return {draw(request, digest).text, FinishReason::kStop, false};
  }

  std::size_t max_concurrency() const override { return 8; }

 private:
  OracleSpec spec_;
};

inline nlohmann::json to_json(const OracleSpec& spec) {
  nlohmann::json acc = nlohmann::json::object();
  for (const auto& [style, p] : spec.style_accuracy) acc[std::string(to_string(style))] = p;
  return {{"seed", spec.seed},
          {"style_accuracy", acc},
          {"invent_good_probability", spec.invent_good_probability},
          {"ignore_shots_probability", spec.ignore_shots_probability}};
}

// Reads the tunable fields; the answer key comes from the task.
inline OracleSpec oracle_spec_from_json(const nlohmann::json& j) {
  OracleSpec spec;
  spec.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("style_accuracy"))
    for (const auto& [name, p] : j.at("style_accuracy").items())
      spec.style_accuracy[style_from_string(name)] = p.get<double>();
  spec.invent_good_probability = j.value("invent_good_probability", spec.invent_good_probability);
  spec.ignore_shots_probability = j.value("ignore_shots_probability", spec.ignore_shots_probability);
  spec.validate();
  return spec;
}

// A synthetic multiple-choice task whose questions are distinct and whose
// answers are drawn from "(A)".."(E)".
inline TaskBundle make_synthetic_task(std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                                      std::string name = "synthetic") {
  static constexpr std::string_view kLetters = "ABCDE";
  Rng rng(seed);
  TaskBundle task;
  task.task_name = std::move(name);
  for (std::size_t i = 0; i < n_train + n_test; ++i) {
    TaskExample ex;
    ex.example_id = std::to_string(i);
    ex.question_text = "Puzzle " + std::to_string(i) + ": which box holds the token " +
                       std::to_string(rng.next_u64() % 100000) + "? Options: (A) (B) (C) (D) (E)";
    ex.gold_answer = std::string("(") + kLetters[rng.uniform_index(kLetters.size())] + ")";
    ex.split = i < n_train ? Split::kTrain : Split::kTest;
    (i < n_train ? task.train : task.test).push_back(std::move(ex));
  }
  return task;
}

}  // namespace reprompt
