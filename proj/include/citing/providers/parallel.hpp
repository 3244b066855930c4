#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

#include "citing/providers/ledger.hpp"

namespace citing {

/// Runs fn(0..n-1) on up to `limit` threads. Results must be written by index,
/// so output order equals input order. Ledger events are released in index
/// order after all tasks finish. The first exception (by index) is rethrown.
/// Nested calls from inside a task run inline.
template <typename Fn>
void ordered_parallel_for(std::size_t n, std::size_t limit, RunLedger* ledger, Fn&& fn) {
  if (n == 0) return;
  if (limit <= 1 || n == 1 || RunLedger::capturing()) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<RunLedger::Capture> captures(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      RunLedger::CaptureScope scope(ledger, ledger ? &captures[i] : nullptr);
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(limit, n);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (ledger) ledger->release(captures);
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace citing
