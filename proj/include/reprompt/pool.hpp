#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "reprompt/prompt.hpp"

namespace reprompt {

// A recipe bound to one pool slot. born_iteration is -1 for recipes from
// initialization.
struct Recipe {
  std::size_t slot_id = 0;
  std::string example_id;
  std::string solution_text;
  std::int64_t born_iteration = -1;
  std::string source_model;
  bool produced_correct_answer = false;

  bool empty() const { return solution_text.empty(); }

  friend bool operator==(const Recipe&, const Recipe&) = default;
};

// The chain state: one recipe per slot, `clone_factor` consecutive slots per
// training example. The slot -> example mapping never changes.
class RecipePool {
 public:
  RecipePool() = default;

  RecipePool(std::span<const TaskExample> train, std::size_t clone_factor) {
    if (clone_factor == 0) throw std::invalid_argument("clone_factor must be >= 1");
    for (std::size_t e = 0; e < train.size(); ++e) {
      for (std::size_t c = 0; c < clone_factor; ++c) {
        Recipe r;
        r.slot_id = slots_.size();
        r.example_id = train[e].example_id;
        slots_.push_back(std::move(r));
        example_of_slot_.push_back(e);
      }
    }
  }

  std::size_t size() const { return slots_.size(); }
  const Recipe& operator[](std::size_t slot) const { return slots_.at(slot); }
  const std::vector<Recipe>& slots() const { return slots_; }

  // Index into the training split this slot belongs to.
  std::size_t example_index(std::size_t slot) const { return example_of_slot_.at(slot); }

  void set(std::size_t slot, Recipe recipe) {
    recipe.slot_id = slot;
    recipe.example_id = slots_.at(slot).example_id;
    slots_[slot] = std::move(recipe);
  }

  std::size_t non_empty_count() const {
    std::size_t n = 0;
    for (const auto& r : slots_) n += r.empty() ? 0 : 1;
    return n;
  }

  ShotTuple shot(std::size_t slot, std::span<const TaskExample> train,
                 const InstructionMessage& message) const {
    const auto& ex = train[example_index(slot)];
    return {ex.question_text, message.text, slots_.at(slot).solution_text, ex.gold_answer};
  }

  friend bool operator==(const RecipePool&, const RecipePool&) = default;

 private:
  std::vector<Recipe> slots_;
  std::vector<std::size_t> example_of_slot_;
};

inline nlohmann::json to_json(const Recipe& r) {
  return {{"slot_id", r.slot_id},
          {"example_id", r.example_id},
          {"solution_text", r.solution_text},
          {"born_iteration", r.born_iteration},
          {"source_model", r.source_model},
          {"produced_correct_answer", r.produced_correct_answer}};
}

inline nlohmann::json to_json(const RecipePool& pool) {
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& r : pool.slots()) slots.push_back(to_json(r));
  return {{"slots", std::move(slots)}};
}

// Rebuilds a pool over `train`; slot example ids must line up with it.
inline RecipePool pool_from_json(const nlohmann::json& j, std::span<const TaskExample> train) {
  const auto& slots = j.at("slots");
  if (train.empty() || slots.size() % train.size() != 0)
    throw std::invalid_argument("pool does not match the training split");
  RecipePool pool(train, slots.size() / train.size());
  for (const auto& s : slots) {
    Recipe r;
    r.slot_id = s.at("slot_id").get<std::size_t>();
    r.example_id = s.at("example_id").get<std::string>();
    r.solution_text = s.at("solution_text").get<std::string>();
    r.born_iteration = s.at("born_iteration").get<std::int64_t>();
    r.source_model = s.at("source_model").get<std::string>();
    r.produced_correct_answer = s.at("produced_correct_answer").get<bool>();
    if (r.slot_id >= pool.size() || pool[r.slot_id].example_id != r.example_id)
      throw std::invalid_argument("pool slot " + std::to_string(r.slot_id) +
                                  " does not match the training split");
    pool.set(r.slot_id, std::move(r));
  }
  return pool;
}

}  // namespace reprompt
