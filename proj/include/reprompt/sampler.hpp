#pragma once

// Recipe inference by Gibbs sampling with rejection.
//
// Initialization draws one zero-shot recipe per slot from the initialization
// backend. Each sampling step picks a slot j and K other slots S_j uniformly,
// prompts the sampling backend with the recipes of S_j followed by x_j, and
// keeps the new recipe if its answer is correct, or otherwise with
// probability 1 - p_rej.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "reprompt/gateway.hpp"
#include "reprompt/pool.hpp"
#include "reprompt/prompt.hpp"
#include "reprompt/rng.hpp"
#include "reprompt/run_log.hpp"
#include "reprompt/sampler_config.hpp"
#include "reprompt/task.hpp"

namespace reprompt {

enum class Decision { kAccept, kReject };

inline Decision rejection_decision(bool draw_correct, double u, double rejection_probability) {
  return (draw_correct || u > rejection_probability) ? Decision::kAccept : Decision::kReject;
}

// Stops once the running average has not exceeded its historical maximum for
// `window` consecutive iterations.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t window) : window_(window) {}

  // Returns true when the run should stop after `iteration`.
  bool observe(std::int64_t iteration, double running_avg) {
    if (running_avg > best_) {
      best_ = running_avg;
      last_improvement_ = iteration;
    }
    return iteration - last_improvement_ >= static_cast<std::int64_t>(window_);
  }

  std::int64_t last_improvement() const { return last_improvement_; }

 private:
  std::size_t window_;
  double best_ = -std::numeric_limits<double>::infinity();
  std::int64_t last_improvement_ = 0;
};

// Errors that end a run instead of degrading a single step.
inline bool is_unrecoverable(const GatewayError& e) {
  return dynamic_cast<const AuthError*>(&e) != nullptr ||
         dynamic_cast<const CacheIOError*>(&e) != nullptr ||
         dynamic_cast<const OracleParseError*>(&e) != nullptr;
}

struct Draw {
  std::string recipe;  // right-trimmed body
  std::optional<std::string> answer;
  bool correct = false;
};

inline Draw interpret_completion(std::string_view text, std::string_view gold) {
  auto split = split_completion(text);
  Draw d;
  d.recipe = rtrim(split.recipe);
  d.correct = exact_match(split.answer, gold);
  d.answer = std::move(split.answer);
  return d;
}

inline nlohmann::json run_header(const TaskBundle& task, const SamplerConfig& config,
                                 std::string_view mode, const nlohmann::json& extra = {}) {
  nlohmann::json train_ids = nlohmann::json::array();
  for (const auto& ex : task.train) train_ids.push_back(ex.example_id);
  nlohmann::json h = {{"kind", "header"},
                      {"mode", mode},
                      {"task_name", task.task_name},
                      {"message", task.message.text},
                      {"train_ids", std::move(train_ids)},
                      {"sampler", to_json(config)}};
  if (!extra.is_null()) h["run_config"] = extra;
  return h;
}

// Mutable state of one chain. The free functions below are thin wrappers.
class GibbsChain {
 public:
  GibbsChain(const TaskBundle& task, SamplerConfig config, Gateway& gateway,
             RunSink* sink = nullptr, SearchMode mode = SearchMode::kGibbs)
      : task_(task),
        config_(std::move(config)),
        gateway_(gateway),
        sink_(sink),
        rng_(config_.seed),
        draw_base_(splitmix64(config_.seed ^ 0xd1b54a32d192ed03ULL)),
        pool_(task.train, mode == SearchMode::kGreedy ? 1 : config_.clone_factor) {
    config_.validate(task.train.size(), mode);
  }

  const RecipePool& pool() const { return pool_; }
  RecipePool& mutable_pool() { return pool_; }
  const RunLog& log() const { return log_; }
  RunLog& mutable_log() { return log_; }
  const SamplerConfig& config() const { return config_; }
  const TaskBundle& task() const { return task_; }
  Gateway& gateway() { return gateway_; }
  Rng& rng() { return rng_; }
  std::int64_t iterations_run() const { return iteration_; }

  void write_header(const nlohmann::json& header) {
    log_.header = header;
    if (sink_) sink_->on_header(header);
  }

  CompletionRequest make_request(const std::string& backend, std::string prompt, double temperature) {
    CompletionRequest r;
    r.backend_id = backend;
    r.prompt = std::move(prompt);
    r.max_tokens = config_.decoding.max_tokens;
    r.top_p = config_.decoding.top_p;
    r.temperature = temperature;
    r.stop_sequences = config_.decoding.stop;
    r.frequency_penalty = config_.decoding.frequency_penalty;
    r.presence_penalty = config_.decoding.presence_penalty;
    r.draw_index = draw_base_ + draw_counter_++;
    return r;
  }

  // Reserves `n` consecutive draw indices (for concurrent fan-out) and
  // returns the first.
  std::uint64_t reserve_draws(std::size_t n) {
    auto first = draw_base_ + draw_counter_;
    draw_counter_ += n;
    return first;
  }

  void initialize() {
    std::size_t correct = 0;
    for (std::size_t j = 0; j < pool_.size(); ++j) {
      const auto& ex = task_.train[pool_.example_index(j)];
      auto request = make_request(config_.init_backend,
                                  assemble_cot_prompt({}, ex.question_text, task_.message),
                                  config_.decoding.sampling_temperature);
      const double u = rng_.uniform01();
      IterationRecord rec;
      rec.iteration = -1;
      rec.slot = j;
      try {
        auto draw = interpret_completion(gateway_.complete(request).text, ex.gold_answer);
        rec.draw_correct = draw.correct;
        rec.accepted =
            rejection_decision(draw.correct, u, config_.rejection_probability) == Decision::kAccept;
        if (rec.accepted)
          pool_.set(j, Recipe{j, ex.example_id, draw.recipe, -1, config_.init_backend, draw.correct});
      } catch (const GatewayError& e) {
        if (is_unrecoverable(e)) throw;
        rec.error = e.what();
      }
      correct += rec.draw_correct ? 1 : 0;
      rec.running_avg = static_cast<double>(correct) / static_cast<double>(j + 1);
      append(rec);
    }
  }

  IterationRecord step() {
    const auto t = ++iteration_;
    const auto n = pool_.size();
    const auto j = rng_.uniform_index(n);
    auto shot_set = rng_.sample_without(n, config_.num_shots, j);
    const double u = rng_.uniform01();

    std::vector<ShotTuple> shots;
    for (auto s : shot_set)
      if (!pool_[s].empty()) shots.push_back(pool_.shot(s, task_.train, task_.message));
    const auto& ex = task_.train[pool_.example_index(j)];
    auto request = make_request(config_.sampling_backend,
                                assemble_cot_prompt(shots, ex.question_text, task_.message),
                                config_.decoding.sampling_temperature);

    IterationRecord rec;
    rec.iteration = t;
    rec.slot = j;
    rec.shot_set = std::move(shot_set);
    std::optional<CompletionResult> result;
    for (int attempt = 0; attempt < 2 && !result; ++attempt) {
      try {
        result = gateway_.complete(request);
      } catch (const GatewayError& e) {
        if (is_unrecoverable(e)) throw;
        rec.error = e.what();
      }
    }
    if (result) {
      rec.error.reset();
      auto draw = interpret_completion(result->text, ex.gold_answer);
      rec.draw_correct = draw.correct;
      rec.accepted =
          rejection_decision(draw.correct, u, config_.rejection_probability) == Decision::kAccept;
      if (rec.accepted)
        pool_.set(j, Recipe{j, ex.example_id, draw.recipe, t, config_.sampling_backend, draw.correct});
    }
    correct_ += rec.draw_correct ? 1 : 0;
    rec.running_avg = static_cast<double>(correct_) / static_cast<double>(t);
    append(rec);
    if (sink_ && config_.snapshot_every > 0 && t % static_cast<std::int64_t>(config_.snapshot_every) == 0)
      sink_->on_snapshot(t, pool_);
    return rec;
  }

  // Runs up to max_iterations steps with early stopping. Returns true if the
  // run stopped early.
  bool sample() {
    EarlyStopper stopper(config_.early_stop_window);
    for (std::size_t i = 0; i < config_.max_iterations; ++i) {
      auto rec = step();
      if (stopper.observe(rec.iteration, rec.running_avg)) return true;
    }
    return false;
  }

  void append(const IterationRecord& rec) {
    log_.records.push_back(rec);
    if (sink_) sink_->on_record(rec);
  }

  void append_round(const GreedyRoundSummary& summary) {
    log_.rounds.push_back(summary);
    if (sink_) sink_->on_round(summary);
  }

  void snapshot(std::int64_t iteration) {
    if (sink_) sink_->on_snapshot(iteration, pool_);
  }

 private:
  const TaskBundle& task_;
  SamplerConfig config_;
  Gateway& gateway_;
  RunSink* sink_;
  Rng rng_;
  std::uint64_t draw_base_;
  std::uint64_t draw_counter_ = 0;
  RecipePool pool_;
  RunLog log_;
  std::int64_t iteration_ = 0;
  std::size_t correct_ = 0;
};

struct RunResult {
  RecipePool pool;
  RunLog log;
  bool stopped_early = false;
  std::int64_t iterations_run = 0;
};

// Initialization only: the pool a zero-iteration run starts from.
inline RecipePool initialize(const TaskBundle& task, const SamplerConfig& config, Gateway& gateway) {
  GibbsChain chain(task, config, gateway);
  chain.initialize();
  return chain.pool();
}

inline RunResult run_gibbs(const TaskBundle& task, const SamplerConfig& config, Gateway& gateway,
                           RunSink* sink = nullptr, const nlohmann::json& run_config = {}) {
  GibbsChain chain(task, config, gateway, sink);
  chain.write_header(run_header(task, config, "gibbs", run_config));
  chain.initialize();
  const bool early = chain.sample();
  return {chain.pool(), chain.log(), early, chain.iterations_run()};
}

}  // namespace reprompt
