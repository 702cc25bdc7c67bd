#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "reprompt/backend.hpp"
#include "reprompt/cache.hpp"
#include "reprompt/completion.hpp"
#include "reprompt/oracle.hpp"

namespace reprompt {

// Uniform completion entry point: backend registry, response cache and
// stop-sequence enforcement. Register backends before use; complete() is then
// safe to call concurrently.
class Gateway {
 public:
  Gateway() = default;
  explicit Gateway(std::filesystem::path cache_dir) : cache_(ResponseCache(std::move(cache_dir))) {}

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void register_backend(const std::string& id, std::shared_ptr<Backend> backend) {
    backends_[id] = Entry{std::move(backend), std::make_unique<std::atomic<std::size_t>>(0)};
  }

  bool has_backend(const std::string& id) const { return backends_.contains(id); }

  Backend& backend(const std::string& id) const { return *entry(id).backend; }

  std::size_t max_concurrency(const std::string& id) const {
    return entry(id).backend->max_concurrency();
  }

  CompletionResult complete(const CompletionRequest& request) {
    const auto& e = entry(request.backend_id);
    const auto key = CacheKey::of(request);
    if (cache_) {
      if (auto hit = cache_->get(key)) {
        cache_hits_.fetch_add(1);
        return *hit;
      }
    }
    e.calls->fetch_add(1);
    backend_calls_.fetch_add(1);
    auto result = apply_stop_sequences(e.backend->complete(request, key.digest), request.stop_sequences);
    result.from_cache = false;
    if (cache_) cache_->put(key, request, result);
    return result;
  }

  // Requests that reached a backend (cache misses).
  std::size_t backend_calls() const { return backend_calls_.load(); }
  std::size_t backend_calls(const std::string& id) const { return entry(id).calls->load(); }
  std::size_t cache_hits() const { return cache_hits_.load(); }

  const std::optional<ResponseCache>& cache() const { return cache_; }

 private:
  struct Entry {
    std::shared_ptr<Backend> backend;
    std::unique_ptr<std::atomic<std::size_t>> calls;
  };

  const Entry& entry(const std::string& id) const {
    auto it = backends_.find(id);
    if (it == backends_.end()) throw std::invalid_argument("unknown backend: " + id);
    return it->second;
  }

  std::map<std::string, Entry> backends_;
  std::optional<ResponseCache> cache_;
  std::atomic<std::size_t> backend_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

// One scripted-oracle completion with the gateway's stop handling, without a
// registry or cache.
inline CompletionResult scripted_oracle_complete(const CompletionRequest& request,
                                                 const OracleSpec& oracle) {
  ScriptedOracle backend(oracle);
  return apply_stop_sequences(backend.complete(request, CacheKey::of(request).digest),
                              request.stop_sequences);
}

}  // namespace reprompt
