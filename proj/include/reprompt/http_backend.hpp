#pragma once

// OpenAI-compatible remote backend: completions (prompt in, text out) or chat
// completions (whole prompt as one user turn). Retries timeouts, 429 and 5xx
// with exponential backoff, caps in-flight requests and spaces request starts.

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>

#include <json.hpp>

#include "reprompt/backend.hpp"

namespace reprompt {

struct HttpResponse {
  int status = 0;  // 0 = transport failure / timeout
  std::string body;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& body,
                            const std::string& bearer_token) = 0;
};

enum class ApiKind { kCompletions, kChat };

inline ApiKind api_kind_from_string(std::string_view s) {
  if (s == "openai_completions") return ApiKind::kCompletions;
  if (s == "openai_chat") return ApiKind::kChat;
  throw std::invalid_argument("unknown remote backend kind: " + std::string(s));
}

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
};

struct RemoteBackendOptions {
  std::string model;
  ApiKind kind = ApiKind::kCompletions;
  std::size_t max_concurrency = 4;
  std::chrono::milliseconds min_interval{0};
  RetryPolicy retry;
  std::string api_key_env = "REPROMPT_API_KEY";
};

// Counting gate plus minimum spacing between request starts.
class RateLimiter {
 public:
  RateLimiter(std::size_t ceiling, std::chrono::milliseconds min_interval)
      : ceiling_(ceiling == 0 ? 1 : ceiling), min_interval_(min_interval) {}

  class Permit {
   public:
    explicit Permit(RateLimiter* owner) : owner_(owner) {}
    Permit(Permit&& other) noexcept : owner_(std::exchange(other.owner_, nullptr)) {}
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;
    Permit& operator=(Permit&&) = delete;
    ~Permit() {
      if (owner_) owner_->release();
    }

   private:
    RateLimiter* owner_;
  };

  Permit acquire() {
    std::chrono::steady_clock::time_point start;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [&] { return in_flight_ < ceiling_; });
      ++in_flight_;
      auto now = std::chrono::steady_clock::now();
      start = std::max(now, next_start_);
      next_start_ = start + min_interval_;
    }
    std::this_thread::sleep_until(start);
    return Permit(this);
  }

  std::size_t ceiling() const { return ceiling_; }

 private:
  void release() {
    {
      std::lock_guard lock(mutex_);
      --in_flight_;
    }
    cv_.notify_one();
  }

  std::size_t ceiling_;
  std::chrono::milliseconds min_interval_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::chrono::steady_clock::time_point next_start_{};
};

inline nlohmann::json remote_request_body(const CompletionRequest& r, const RemoteBackendOptions& o) {
  nlohmann::json body = {{"model", o.model},
                         {"max_tokens", r.max_tokens},
                         {"temperature", r.temperature},
                         {"top_p", r.top_p},
                         {"frequency_penalty", r.frequency_penalty},
                         {"presence_penalty", r.presence_penalty},
                         {"n", 1}};
  if (!r.stop_sequences.empty()) body["stop"] = r.stop_sequences;
  if (o.kind == ApiKind::kChat) {
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", r.prompt}}});
  } else {
    body["prompt"] = r.prompt;
  }
  return body;
}

inline CompletionResult parse_remote_response(const std::string& body, ApiKind kind,
                                              const std::string& digest) {
  try {
    auto j = nlohmann::json::parse(body);
    const auto& choice = j.at("choices").at(0);
    CompletionResult result;
    result.text = kind == ApiKind::kChat ? choice.at("message").at("content").get<std::string>()
                                         : choice.at("text").get<std::string>();
    const bool truncated = choice.contains("finish_reason") && choice.at("finish_reason") == "length";
    result.finish_reason = truncated ? FinishReason::kLength : FinishReason::kStop;
    return result;
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("malformed response body: ") + e.what(), digest);
  }
}

class RemoteBackend : public Backend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  RemoteBackend(std::shared_ptr<HttpTransport> transport, RemoteBackendOptions options,
                Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
      : transport_(std::move(transport)),
        options_(std::move(options)),
        limiter_(options_.max_concurrency, options_.min_interval),
        sleeper_(std::move(sleeper)) {}

  CompletionResult complete(const CompletionRequest& request, const std::string& digest) override {
    const char* key = std::getenv(options_.api_key_env.c_str());
    if (key == nullptr || *key == '\0')
      throw AuthError("environment variable " + options_.api_key_env + " is not set", digest);
    const auto path = options_.kind == ApiKind::kChat ? "/chat/completions" : "/completions";
    const auto body = remote_request_body(request, options_).dump();

    auto backoff = options_.retry.initial_backoff;
    HttpResponse last;
    for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
      {
        auto permit = limiter_.acquire();
        last = transport_->post(path, body, key);
      }
      if (last.status >= 200 && last.status < 300)
        return parse_remote_response(last.body, options_.kind, digest);
      if (last.status == 401 || last.status == 403)
        throw AuthError("backend rejected credential (HTTP " + std::to_string(last.status) + ")",
                        digest);
      const bool retryable = last.status == 0 || last.status == 408 || last.status == 429 ||
                             last.status >= 500;
      if (!retryable)
        throw BackendError("HTTP " + std::to_string(last.status) + ": " + last.body.substr(0, 200),
                           digest);
      if (attempt < options_.retry.max_attempts) {
        sleeper_(backoff);
        backoff = std::chrono::milliseconds(
            static_cast<long long>(static_cast<double>(backoff.count()) * options_.retry.multiplier));
      }
    }
    throw RateLimitExhausted("retry budget of " + std::to_string(options_.retry.max_attempts) +
                                 " attempts spent (last HTTP " + std::to_string(last.status) + ")",
                             digest);
  }

  std::size_t max_concurrency() const override { return limiter_.ceiling(); }

 private:
  std::shared_ptr<HttpTransport> transport_;
  RemoteBackendOptions options_;
  RateLimiter limiter_;
  Sleeper sleeper_;
};

}  // namespace reprompt
