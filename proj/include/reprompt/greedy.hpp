#pragma once

// Greedy search variant. Every slot is scored by the training accuracy of its
// tuple used alone as a one-shot prompt. Each round prompts every slot with
// the K best tuples (its own excluded) and keeps the new recipe only if it
// scores strictly higher than the incumbent.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "reprompt/evaluator.hpp"
#include "reprompt/sampler.hpp"

namespace reprompt {

struct GreedyState {
  std::vector<std::optional<TupleScore>> scores;
  std::size_t round = 0;
};

// Non-empty scored slots, best first, ties to the lower slot id.
inline std::vector<std::size_t> rank_slots(const RecipePool& pool,
                                           std::span<const std::optional<TupleScore>> scores) {
  std::vector<std::size_t> ranked;
  for (std::size_t s = 0; s < pool.size(); ++s)
    if (!pool[s].empty() && scores[s]) ranked.push_back(s);
  std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
    return scores[a]->accuracy > scores[b]->accuracy;
  });
  return ranked;
}

// Summary ranking counts an empty or unscored slot as 0, so the top-K mean
// stays defined while fewer than K tuples exist and never drops.
inline GreedyRoundSummary summarize_round(const RecipePool& pool, const GreedyState& state,
                                          std::size_t k) {
  GreedyRoundSummary summary;
  summary.round = state.round;
  auto score_of = [&](std::size_t s) {
    return !pool[s].empty() && state.scores[s] ? state.scores[s]->accuracy : 0.0;
  };
  std::vector<std::size_t> ranked(pool.size());
  for (std::size_t s = 0; s < ranked.size(); ++s) ranked[s] = s;
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](std::size_t a, std::size_t b) { return score_of(a) > score_of(b); });
  double total = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
    summary.selected.push_back(ranked[i]);
    total += score_of(ranked[i]);
  }
  summary.top_k_mean = summary.selected.empty() ? 0.0 : total / static_cast<double>(summary.selected.size());
  for (const auto& s : state.scores)
    summary.slot_scores.push_back(s ? std::optional<double>(s->accuracy) : std::nullopt);
  return summary;
}

// Strict improvement; an empty incumbent loses to any scored candidate.
inline bool greedy_replaces(const std::optional<double>& candidate, const std::optional<double>& incumbent) {
  if (!candidate) return false;
  if (!incumbent) return true;
  return *candidate > *incumbent;
}

inline void score_initial_pool(GibbsChain& chain, GreedyState& state) {
  const auto& task = chain.task();
  const auto& cfg = chain.config();
  state.scores = score_pool(chain.pool(), task.train, chain.gateway(), cfg.sampling_backend,
                            cfg.decoding, task.message);
}

inline void greedy_round(GibbsChain& chain, GreedyState& state) {
  const auto& task = chain.task();
  const auto& cfg = chain.config();
  auto& gateway = chain.gateway();
  const auto& pool = chain.pool();
  const auto n = pool.size();
  const auto round = ++state.round;
  const auto ranked = rank_slots(pool, state.scores);
  const auto first_draw = chain.reserve_draws(n);

  struct Candidate {
    std::vector<std::size_t> shot_set;
    std::optional<Draw> draw;
    std::optional<TupleScore> score;
    std::optional<std::string> error;
  };
  std::vector<Candidate> candidates(n);

  parallel_for(n, gateway.max_concurrency(cfg.sampling_backend), [&](std::size_t j) {
    auto& c = candidates[j];
    std::vector<ShotTuple> shots;
    for (auto s : ranked) {
      if (c.shot_set.size() == cfg.num_shots) break;
      if (s == j) continue;
      c.shot_set.push_back(s);
      shots.push_back(pool.shot(s, task.train, task.message));
    }
    const auto& ex = task.train[pool.example_index(j)];
    CompletionRequest req = eval_request(cfg.sampling_backend,
                                         assemble_cot_prompt(shots, ex.question_text, task.message),
                                         cfg.decoding);
    req.temperature = cfg.decoding.sampling_temperature;
    req.draw_index = first_draw + j;
    for (int attempt = 0; attempt < 2 && !c.score; ++attempt) {
      try {
        if (!c.draw) c.draw = interpret_completion(gateway.complete(req).text, ex.gold_answer);
        if (c.draw->recipe.empty()) break;
        c.score = tuple_training_accuracy(
            ShotTuple{ex.question_text, task.message.text, c.draw->recipe, ex.gold_answer},
            task.train, gateway, cfg.sampling_backend, cfg.decoding, task.message);
        c.score->slot_id = j;
        c.error.reset();
      } catch (const GatewayError& e) {
        if (is_unrecoverable(e)) throw;
        c.error = e.what();
      }
    }
  });

  std::size_t correct = 0, seen = 0;
  for (const auto& r : chain.log().records)
    if (r.iteration >= 0) {
      ++seen;
      correct += r.draw_correct ? 1 : 0;
    }

  for (std::size_t j = 0; j < n; ++j) {
    auto& c = candidates[j];
    IterationRecord rec;
    rec.iteration = static_cast<std::int64_t>(round);
    rec.slot = j;
    rec.shot_set = c.shot_set;
    rec.error = c.error;
    rec.draw_correct = c.draw && c.draw->correct;
    if (c.score) rec.candidate_score = c.score->accuracy;
    if (state.scores[j]) rec.incumbent_score = state.scores[j]->accuracy;
    rec.accepted = greedy_replaces(rec.candidate_score, rec.incumbent_score);
    if (rec.accepted) {
      const auto& ex = task.train[pool.example_index(j)];
      chain.mutable_pool().set(j, Recipe{j, ex.example_id, c.draw->recipe, rec.iteration,
                                         cfg.sampling_backend, c.draw->correct});
      state.scores[j] = c.score;
    }
    ++seen;
    correct += rec.draw_correct ? 1 : 0;
    rec.running_avg = static_cast<double>(correct) / static_cast<double>(seen);
    chain.append(rec);
  }
  chain.append_round(summarize_round(chain.pool(), state, cfg.num_shots));
  chain.snapshot(static_cast<std::int64_t>(round));
}

struct GreedyResult {
  RecipePool pool;
  RunLog log;
  std::vector<std::optional<TupleScore>> scores;
};

inline GreedyResult run_greedy(const TaskBundle& task, const SamplerConfig& config, Gateway& gateway,
                               RunSink* sink = nullptr, const nlohmann::json& run_config = {}) {
  GibbsChain chain(task, config, gateway, sink, SearchMode::kGreedy);
  chain.write_header(run_header(task, config, "greedy", run_config));
  chain.initialize();
  GreedyState state;
  score_initial_pool(chain, state);
  chain.append_round(summarize_round(chain.pool(), state, config.num_shots));
  for (std::size_t r = 0; r < config.max_iterations; ++r) greedy_round(chain, state);
  return {chain.pool(), chain.log(), state.scores};
}

}  // namespace reprompt
