#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace reprompt {

// Decoding settings shared by every call the sampler and evaluator make.
struct DecodingParams {
  int max_tokens = 500;
  double top_p = 0.5;
  std::vector<std::string> stop{"END"};
  double frequency_penalty = 0.0;
  double presence_penalty = 0.0;
  double sampling_temperature = 1.0;  // recipe sampling
  double eval_temperature = 0.0;      // scoring and testing
};

enum class SearchMode { kGibbs, kGreedy };

struct SamplerConfig {
  std::size_t num_shots = 5;            // K
  std::size_t max_iterations = 20000;   // M
  double rejection_probability = 0.99;  // p_rej
  std::size_t clone_factor = 1;         // k
  std::size_t early_stop_window = 1000; // W
  std::uint64_t seed = 0;
  std::string init_backend;      // LLM_1
  std::string sampling_backend;  // LLM_2
  std::size_t snapshot_every = 500;
  DecodingParams decoding;

  static SamplerConfig gibbs_defaults() { return {}; }

  static SamplerConfig greedy_defaults() {
    SamplerConfig c;
    c.max_iterations = 10;
    return c;
  }

  // Pool size for a training set under this mode.
  std::size_t pool_size(std::size_t n_train, SearchMode mode) const {
    return mode == SearchMode::kGreedy ? n_train : n_train * clone_factor;
  }

  void validate(std::size_t n_train, SearchMode mode = SearchMode::kGibbs) const {
    if (n_train == 0) throw std::invalid_argument("training split is empty");
    if (num_shots < 1) throw std::invalid_argument("num_shots must be >= 1");
    if (!(rejection_probability >= 0.0 && rejection_probability <= 1.0))
      throw std::invalid_argument("rejection_probability must be in [0,1]");
    if (clone_factor < 1) throw std::invalid_argument("clone_factor must be >= 1");
    if (early_stop_window < 1) throw std::invalid_argument("early_stop_window must be >= 1");
    if (num_shots >= pool_size(n_train, mode))
      throw std::invalid_argument("num_shots must be smaller than the pool size (" +
                                  std::to_string(pool_size(n_train, mode)) + ")");
    if (init_backend.empty() || sampling_backend.empty())
      throw std::invalid_argument("init_backend and sampling_backend must be set");
  }
};

inline nlohmann::json to_json(const DecodingParams& d) {
  return {{"max_tokens", d.max_tokens},
          {"top_p", d.top_p},
          {"stop", d.stop},
          {"frequency_penalty", d.frequency_penalty},
          {"presence_penalty", d.presence_penalty},
          {"sampling_temperature", d.sampling_temperature},
          {"eval_temperature", d.eval_temperature}};
}

inline DecodingParams decoding_from_json(const nlohmann::json& j) {
  DecodingParams d;
  d.max_tokens = j.value("max_tokens", d.max_tokens);
  d.top_p = j.value("top_p", d.top_p);
  d.stop = j.value("stop", d.stop);
  d.frequency_penalty = j.value("frequency_penalty", d.frequency_penalty);
  d.presence_penalty = j.value("presence_penalty", d.presence_penalty);
  d.sampling_temperature = j.value("sampling_temperature", d.sampling_temperature);
  d.eval_temperature = j.value("eval_temperature", d.eval_temperature);
  return d;
}

inline nlohmann::json to_json(const SamplerConfig& c) {
  return {{"num_shots", c.num_shots},
          {"max_iterations", c.max_iterations},
          {"rejection_probability", c.rejection_probability},
          {"clone_factor", c.clone_factor},
          {"early_stop_window", c.early_stop_window},
          {"seed", c.seed},
          {"init_backend", c.init_backend},
          {"sampling_backend", c.sampling_backend},
          {"snapshot_every", c.snapshot_every},
          {"decoding", to_json(c.decoding)}};
}

// Missing fields keep the values already in `base` (so per-mode defaults apply).
inline SamplerConfig sampler_config_from_json(const nlohmann::json& j, SamplerConfig base) {
  base.num_shots = j.value("num_shots", base.num_shots);
  base.max_iterations = j.value("max_iterations", base.max_iterations);
  base.rejection_probability = j.value("rejection_probability", base.rejection_probability);
  base.clone_factor = j.value("clone_factor", base.clone_factor);
  base.early_stop_window = j.value("early_stop_window", base.early_stop_window);
  base.seed = j.value("seed", base.seed);
  base.init_backend = j.value("init_backend", base.init_backend);
  base.sampling_backend = j.value("sampling_backend", base.sampling_backend);
  base.snapshot_every = j.value("snapshot_every", base.snapshot_every);
  if (j.contains("decoding")) base.decoding = decoding_from_json(j.at("decoding"));
  return base;
}

}  // namespace reprompt
