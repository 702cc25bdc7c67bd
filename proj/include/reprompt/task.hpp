#pragma once

// Task bundle: a named set of train/test examples plus the instruction message.
//
// File format:
//   {"task_name": "...", "message": "... (optional)",
//    "examples": [{"id": "...", "input": "...", "target": "...", "split": "train|test"}],
//    "provenance": {...} (optional)}

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "reprompt/prompt.hpp"

namespace reprompt {

class SchemaError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TaskBundle {
  std::string task_name;
  InstructionMessage message;
  std::vector<TaskExample> train;
  std::vector<TaskExample> test;
  nlohmann::json provenance = nlohmann::json::object();

  const TaskExample* find(std::string_view id) const {
    for (const auto* split : {&train, &test})
      for (const auto& ex : *split)
        if (ex.example_id == id) return &ex;
    return nullptr;
  }
};

inline void validate(const TaskBundle& task) {
  std::set<std::string> ids;
  for (const auto* split : {&task.train, &task.test}) {
    for (const auto& ex : *split) {
      if (ex.question_text.empty()) throw SchemaError("example " + ex.example_id + ": empty input");
      if (ex.gold_answer.empty()) throw SchemaError("example " + ex.example_id + ": empty target");
      if (!ids.insert(ex.example_id).second)
        throw SchemaError("duplicate example id: " + ex.example_id);
    }
  }
}

inline nlohmann::json to_json(const TaskBundle& task) {
  nlohmann::json examples = nlohmann::json::array();
  for (const auto* split : {&task.train, &task.test})
    for (const auto& ex : *split)
      examples.push_back({{"id", ex.example_id},
                          {"input", ex.question_text},
                          {"target", ex.gold_answer},
                          {"split", to_string(ex.split)}});
  nlohmann::json j = {{"task_name", task.task_name}, {"examples", std::move(examples)}};
  if (task.message.text != kDefaultMessage) j["message"] = task.message.text;
  if (!task.provenance.empty()) j["provenance"] = task.provenance;
  return j;
}

inline TaskBundle task_from_json(const nlohmann::json& j) {
  TaskBundle task;
  try {
    task.task_name = j.at("task_name").get<std::string>();
    if (j.contains("message")) task.message.text = j.at("message").get<std::string>();
    if (j.contains("provenance")) task.provenance = j.at("provenance");
    for (const auto& e : j.at("examples")) {
      TaskExample ex{e.at("id").is_string() ? e.at("id").get<std::string>() : e.at("id").dump(),
                     e.at("input").get<std::string>(), e.at("target").get<std::string>(),
                     split_from_string(e.value("split", std::string("train")))};
      (ex.split == Split::kTrain ? task.train : task.test).push_back(std::move(ex));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("task file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("task file: ") + e.what());
  }
  validate(task);
  return task;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline TaskBundle load_task(const std::filesystem::path& path) { return task_from_json(read_json_file(path)); }

}  // namespace reprompt
