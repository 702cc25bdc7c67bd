#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reprompt/digest.hpp"

namespace reprompt {

// One decoding call. Defaults are the decoding settings used for recipe
// sampling; evaluation sets temperature to 0.
struct CompletionRequest {
  std::string backend_id;
  std::string prompt;
  int max_tokens = 500;
  double top_p = 0.5;
  double temperature = 1.0;
  std::vector<std::string> stop_sequences{"END"};
  double frequency_penalty = 0.0;
  double presence_penalty = 0.0;
  // Distinguishes repeated stochastic draws of the same prompt. Ignored
  // (treated as 0) at temperature 0.
  std::uint64_t draw_index = 0;

  std::uint64_t effective_draw_index() const { return temperature == 0.0 ? 0 : draw_index; }

  friend bool operator==(const CompletionRequest&, const CompletionRequest&) = default;
};

enum class FinishReason { kStop, kLength, kError };

inline std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::kStop: return "stop";
    case FinishReason::kLength: return "length";
    case FinishReason::kError: return "error";
  }
  return "error";
}

inline FinishReason finish_reason_from_string(std::string_view s) {
  if (s == "stop") return FinishReason::kStop;
  if (s == "length") return FinishReason::kLength;
  return FinishReason::kError;
}

struct CompletionResult {
  std::string text;
  FinishReason finish_reason = FinishReason::kStop;
  bool from_cache = false;

  friend bool operator==(const CompletionResult&, const CompletionResult&) = default;
};

inline nlohmann::json to_json(const CompletionRequest& r) {
  return {{"backend_id", r.backend_id},
          {"prompt", r.prompt},
          {"max_tokens", r.max_tokens},
          {"top_p", r.top_p},
          {"temperature", r.temperature},
          {"stop", r.stop_sequences},
          {"frequency_penalty", r.frequency_penalty},
          {"presence_penalty", r.presence_penalty},
          {"draw_index", r.effective_draw_index()}};
}

inline CompletionRequest request_from_json(const nlohmann::json& j) {
  CompletionRequest r;
  r.backend_id = j.at("backend_id").get<std::string>();
  r.prompt = j.at("prompt").get<std::string>();
  r.max_tokens = j.at("max_tokens").get<int>();
  r.top_p = j.at("top_p").get<double>();
  r.temperature = j.at("temperature").get<double>();
  r.stop_sequences = j.at("stop").get<std::vector<std::string>>();
  r.frequency_penalty = j.at("frequency_penalty").get<double>();
  r.presence_penalty = j.at("presence_penalty").get<double>();
  r.draw_index = j.at("draw_index").get<std::uint64_t>();
  return r;
}

inline nlohmann::json to_json(const CompletionResult& r) {
  return {{"text", r.text}, {"finish_reason", to_string(r.finish_reason)}};
}

inline CompletionResult result_from_json(const nlohmann::json& j) {
  return {j.at("text").get<std::string>(),
          finish_reason_from_string(j.at("finish_reason").get<std::string>()), false};
}

// SHA-256 over the canonical JSON of (backend, prompt, decoding params, draw).
struct CacheKey {
  std::string digest;

  static CacheKey of(const CompletionRequest& r) { return {sha256_hex(to_json(r).dump())}; }

  friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

// Cuts the text at the earliest stop sequence.
inline CompletionResult apply_stop_sequences(CompletionResult result,
                                             const std::vector<std::string>& stops) {
  auto cut = std::string::npos;
  for (const auto& stop : stops) {
    if (stop.empty()) continue;
    cut = std::min(cut, result.text.find(stop));
  }
  if (cut != std::string::npos) {
    result.text.resize(cut);
    result.finish_reason = FinishReason::kStop;
  }
  return result;
}

// Gateway failures. Every error carries the request digest.
class GatewayError : public std::runtime_error {
 public:
  GatewayError(const std::string& what, std::string digest)
      : std::runtime_error(what + " [request " + digest.substr(0, 12) + "]"),
        digest_(std::move(digest)) {}
  const std::string& digest() const { return digest_; }

 private:
  std::string digest_;
};

class AuthError : public GatewayError {
  using GatewayError::GatewayError;
};
class RateLimitExhausted : public GatewayError {
  using GatewayError::GatewayError;
};
class BackendError : public GatewayError {
  using GatewayError::GatewayError;
};
class CacheIOError : public GatewayError {
  using GatewayError::GatewayError;
};
class OracleParseError : public GatewayError {
  using GatewayError::GatewayError;
};

}  // namespace reprompt
