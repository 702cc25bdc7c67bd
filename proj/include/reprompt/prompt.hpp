#pragma once

// Prompt assembly, answer extraction and exact-match scoring.
//
// A chain-of-thought prompt is a sequence of shot blocks followed by the
// test question. Each shot block is
//
//   <question>\n<message>\n<solution>\n<answer>ANSWER</answer>\nEND
//
// blocks are separated by one blank line, and the prompt ends with
//
//   <test question>\n<message>\n
//
// All functions here are pure.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace reprompt {

inline constexpr std::string_view kDefaultMessage =
    "Let's think step by step. At the end, show your answer bracketed with "
    "<answer> and </answer>. Finally generate END at the end of the solution.";

inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";
inline constexpr std::string_view kStopWord = "END";

struct InstructionMessage {
  std::string text{kDefaultMessage};

  friend bool operator==(const InstructionMessage&, const InstructionMessage&) = default;
};

enum class Split { kTrain, kTest };

inline std::string_view to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

inline Split split_from_string(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split: " + std::string(s));
}

struct TaskExample {
  std::string example_id;
  std::string question_text;
  std::string gold_answer;
  Split split = Split::kTrain;

  friend bool operator==(const TaskExample&, const TaskExample&) = default;
};

// One in-context demonstration (x, m, z, y).
struct ShotTuple {
  std::string question_text;
  std::string message{kDefaultMessage};
  std::string solution_text;
  std::string answer_text;

  friend bool operator==(const ShotTuple&, const ShotTuple&) = default;
};

inline std::string trim(std::string_view s) {
  constexpr std::string_view ws = " \t\n\r\f\v";
  auto begin = s.find_first_not_of(ws);
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(ws);
  return std::string(s.substr(begin, end - begin + 1));
}

inline std::string rtrim(std::string_view s) {
  auto end = s.find_last_not_of(" \t\n\r\f\v");
  if (end == std::string_view::npos) return {};
  return std::string(s.substr(0, end + 1));
}

namespace detail {

inline void append_shot_block(std::string& out, const ShotTuple& shot) {
  out += shot.question_text;
  out += '\n';
  out += shot.message;
  out += '\n';
  out += shot.solution_text;
  out += '\n';
  out += kAnswerOpen;
  out += shot.answer_text;
  out += kAnswerClose;
  out += '\n';
  out += kStopWord;
}

inline void append_query(std::string& out, std::string_view question, std::string_view message) {
  out += question;
  out += '\n';
  out += message;
  out += '\n';
}

}  // namespace detail

// Renders [x_1, m, z_1, y_1, ..., x_K, m, z_K, y_K, x, m]. Shots with an
// empty solution are skipped; they carry no recipe to imitate.
inline std::string assemble_cot_prompt(std::span<const ShotTuple> shots,
                                       std::string_view test_question,
                                       const InstructionMessage& message = {}) {
  std::string out;
  for (const auto& shot : shots) {
    if (shot.solution_text.empty()) continue;
    detail::append_shot_block(out, shot);
    out += "\n\n";
  }
  detail::append_query(out, test_question, message.text);
  return out;
}

// Question-answer pairs without recipes (the few-shot baseline).
inline std::string assemble_fewshot_prompt(
    std::span<const std::pair<std::string, std::string>> pairs, std::string_view test_question,
    const InstructionMessage& message = {}) {
  std::string out;
  for (const auto& [question, answer] : pairs) {
    out += question;
    out += '\n';
    out += kAnswerOpen;
    out += answer;
    out += kAnswerClose;
    out += '\n';
    out += kStopWord;
    out += "\n\n";
  }
  detail::append_query(out, test_question, message.text);
  return out;
}

// Text strictly between the first "<answer>" and the first "</answer>" after it.
inline std::optional<std::string> extract_answer(std::string_view completion) {
  auto open = completion.find(kAnswerOpen);
  if (open == std::string_view::npos) return std::nullopt;
  auto body = open + kAnswerOpen.size();
  auto close = completion.find(kAnswerClose, body);
  if (close == std::string_view::npos) return std::nullopt;
  return std::string(completion.substr(body, close - body));
}

struct SplitCompletion {
  std::string recipe;                 // text before the first "<answer>", verbatim
  std::optional<std::string> answer;  // absent when the markers are missing
};

// Separates a completion into the recipe body z and the answer y. Without a
// complete answer block the whole completion is returned as the body.
inline SplitCompletion split_completion(std::string_view completion) {
  auto answer = extract_answer(completion);
  if (!answer) return {std::string(completion), std::nullopt};
  return {std::string(completion.substr(0, completion.find(kAnswerOpen))), std::move(answer)};
}

inline bool exact_match(const std::optional<std::string>& extracted, std::string_view gold) {
  if (!extracted) return false;
  return trim(*extracted) == trim(gold);
}

// Inverse of assemble_cot_prompt for a known message. Used by the scripted
// oracle, so a mismatch here surfaces as a format regression.
struct ParsedPrompt {
  std::vector<ShotTuple> shots;
  std::string test_question;
};

inline std::optional<ParsedPrompt> parse_cot_prompt(std::string_view prompt,
                                                    const InstructionMessage& message = {}) {
  const std::string question_end = "\n" + message.text + "\n";
  const std::string block_end = std::string(kAnswerClose) + "\n" + std::string(kStopWord) + "\n\n";

  ParsedPrompt parsed;
  std::size_t pos = 0;
  while (true) {
    auto q_end = prompt.find(question_end, pos);
    if (q_end == std::string_view::npos) return std::nullopt;
    std::string question(prompt.substr(pos, q_end - pos));
    if (question.find(block_end) != std::string::npos) return std::nullopt;
    auto after = q_end + question_end.size();
    if (after == prompt.size()) {
      parsed.test_question = std::move(question);
      return parsed;
    }
    auto open = prompt.find(kAnswerOpen, after);
    if (open == std::string_view::npos || open == after || prompt[open - 1] != '\n')
      return std::nullopt;
    auto close = prompt.find(block_end, open);
    if (close == std::string_view::npos) return std::nullopt;
    ShotTuple shot;
    shot.question_text = std::move(question);
    shot.message = message.text;
    shot.solution_text = std::string(prompt.substr(after, open - 1 - after));
    auto answer_begin = open + kAnswerOpen.size();
    shot.answer_text = std::string(prompt.substr(answer_begin, close - answer_begin));
    parsed.shots.push_back(std::move(shot));
    pos = close + block_end.size();
  }
}

struct ParsedFewshotPrompt {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string test_question;
};

// Inverse of assemble_fewshot_prompt.
inline std::optional<ParsedFewshotPrompt> parse_fewshot_prompt(
    std::string_view prompt, const InstructionMessage& message = {}) {
  const std::string tail = "\n" + message.text + "\n";
  if (prompt.size() < tail.size() || prompt.substr(prompt.size() - tail.size()) != tail)
    return std::nullopt;
  const std::string pair_mid = "\n" + std::string(kAnswerOpen);
  const std::string pair_end = std::string(kAnswerClose) + "\n" + std::string(kStopWord) + "\n\n";
  const auto body_end = prompt.size() - tail.size();

  ParsedFewshotPrompt parsed;
  std::size_t pos = 0;
  while (true) {
    auto end = prompt.find(pair_end, pos);
    if (end == std::string_view::npos || end >= body_end) break;
    auto block = prompt.substr(pos, end - pos);
    auto mid = block.rfind(pair_mid);
    if (mid == std::string_view::npos) return std::nullopt;
    parsed.pairs.emplace_back(std::string(block.substr(0, mid)),
                              std::string(block.substr(mid + pair_mid.size())));
    pos = end + pair_end.size();
  }
  parsed.test_question = std::string(prompt.substr(pos, body_end - pos));
  if (parsed.test_question.find('\n' + message.text + '\n') != std::string::npos) return std::nullopt;
  return parsed;
}

}  // namespace reprompt
