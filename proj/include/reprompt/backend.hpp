#pragma once

#include <cstddef>
#include <string>

#include "reprompt/completion.hpp"

namespace reprompt {

// A source of completions. Implementations must be safe to call from
// several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;

  // `digest` identifies the request in errors.
  virtual CompletionResult complete(const CompletionRequest& request, const std::string& digest) = 0;

  // Upper bound on in-flight requests this backend accepts.
  virtual std::size_t max_concurrency() const { return 1; }
};

}  // namespace reprompt
