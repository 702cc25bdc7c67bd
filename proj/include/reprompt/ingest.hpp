#pragma once

// Big-Bench task JSON -> task bundle. Training examples are drawn from items
// not reserved for testing; when too few remain, the rest is topped up from
// the reserved items and the bundle records how many.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "reprompt/rng.hpp"
#include "reprompt/task.hpp"

namespace reprompt {

class InsufficientExamples : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SourceExample {
  std::string input;
  std::string target;
};

inline std::string target_of(const nlohmann::json& e, std::size_t index) {
  if (e.contains("target")) {
    const auto& t = e.at("target");
    if (t.is_string()) return t.get<std::string>();
    if (t.is_array() && !t.empty() && t.at(0).is_string()) return t.at(0).get<std::string>();
    if (t.is_number()) return t.dump();
  }
  if (e.contains("target_scores")) {
    std::optional<std::string> best;
    double best_score = -1.0;
    for (const auto& [answer, score] : e.at("target_scores").items()) {
      if (score.get<double>() > best_score) {
        best_score = score.get<double>();
        best = answer;
      }
    }
    if (best) return *best;
  }
  throw SchemaError("example " + std::to_string(index) + " has no usable target");
}

inline std::vector<SourceExample> source_examples(const nlohmann::json& j) {
  if (!j.contains("examples") || !j.at("examples").is_array())
    throw SchemaError("input has no \"examples\" array");
  std::vector<SourceExample> out;
  std::size_t i = 0;
  for (const auto& e : j.at("examples")) {
    if (!e.contains("input") || !e.at("input").is_string())
      throw SchemaError("example " + std::to_string(i) + " has no string \"input\"");
    out.push_back({e.at("input").get<std::string>(), target_of(e, i)});
    ++i;
  }
  return out;
}

// Reserved items: either a JSON array of source indices or a task JSON whose
// example inputs identify the reserved items.
inline std::set<std::size_t> reserved_indices(const nlohmann::json& reserved,
                                              const std::vector<SourceExample>& examples) {
  std::set<std::size_t> out;
  if (reserved.is_array()) {
    for (const auto& v : reserved) {
      auto idx = v.get<std::size_t>();
      if (idx >= examples.size()) throw SchemaError("reserved index out of range: " + std::to_string(idx));
      out.insert(idx);
    }
    return out;
  }
  std::unordered_set<std::string> inputs;
  for (const auto& e : source_examples(reserved)) inputs.insert(e.input);
  for (std::size_t i = 0; i < examples.size(); ++i)
    if (inputs.contains(examples[i].input)) out.insert(i);
  return out;
}

inline TaskBundle ingest(const nlohmann::json& bigbench, std::string task_name, std::size_t train_size,
                         std::uint64_t seed, const std::optional<nlohmann::json>& reserved = std::nullopt) {
  const auto examples = source_examples(bigbench);
  if (examples.size() < train_size + 1)
    throw InsufficientExamples("need at least " + std::to_string(train_size + 1) + " examples, found " +
                               std::to_string(examples.size()));
  const auto reserved_set = reserved ? reserved_indices(*reserved, examples) : std::set<std::size_t>{};

  std::vector<std::size_t> open, held;
  for (std::size_t i = 0; i < examples.size(); ++i) (reserved_set.contains(i) ? held : open).push_back(i);
  Rng rng(seed);
  rng.shuffle(open);
  rng.shuffle(held);

  std::vector<std::size_t> train(open.begin(), open.begin() + std::min(train_size, open.size()));
  const std::size_t topped_up = train_size - train.size();
  train.insert(train.end(), held.begin(), held.begin() + topped_up);
  std::sort(train.begin(), train.end());
  const std::set<std::size_t> in_train(train.begin(), train.end());

  TaskBundle task;
  task.task_name = std::move(task_name);
  for (auto i : train)
    task.train.push_back({std::to_string(i), examples[i].input, examples[i].target, Split::kTrain});
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (in_train.contains(i)) continue;
    if (reserved && !reserved_set.contains(i)) continue;
    task.test.push_back({std::to_string(i), examples[i].input, examples[i].target, Split::kTest});
  }
  task.provenance = {{"seed", seed},
                     {"train_size", train_size},
                     {"source_examples", examples.size()},
                     {"reserved", reserved_set.size()},
                     {"topped_up_from_reserved", topped_up}};
  validate(task);
  return task;
}

}  // namespace reprompt
