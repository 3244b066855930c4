#pragma once

#include <algorithm>
#include <chrono>
#include <string>
#include <thread>

#include "citing/error.hpp"

namespace citing {

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{8000};

  std::chrono::milliseconds delay_before(int attempt) const {
    // attempt is the 1-based number of the attempt about to be made (>= 2).
    auto d = base_delay * (1LL << std::min(attempt - 2, 20));
    return std::min<std::chrono::milliseconds>(d, max_delay);
  }
};

/// Calls `attempt()` until it succeeds, a non-retryable ProviderError escapes,
/// or `max_attempts` is reached. `attempts` reports how many calls were made,
/// including on failure.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, int& attempts, Fn&& attempt) -> decltype(attempt()) {
  attempts = 0;
  const int max_attempts = std::max(1, policy.max_attempts);
  for (;;) {
    ++attempts;
    try {
      return attempt();
    } catch (const ProviderError& e) {
      if (!e.retryable()) throw;
      if (attempts >= max_attempts) {
        throw ProviderError("gave up after " + std::to_string(attempts) +
                                " attempts: " + e.what(),
                            false, e.status());
      }
    }
    std::this_thread::sleep_for(policy.delay_before(attempts + 1));
  }
}

}  // namespace citing
