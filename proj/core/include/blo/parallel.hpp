#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace blo {

/// Upper bound on worker threads: the BLO_THREADS environment variable if set, otherwise
/// the hardware concurrency.
std::size_t thread_cap();

/// min(requested, thread_cap()), at least 1. A request of 0 means "use the cap".
std::size_t effective_threads(std::size_t requested);

/// Runs body(i) for i in [0, n) over up to `threads` workers. Index i is always handled by
/// worker i % threads, so any per-index result is independent of the thread count. If
/// bodies throw, the exception from the lowest failing index is rethrown.
template <class Body>
void parallel_for(std::size_t n, std::size_t threads, Body&& body) {
  threads = effective_threads(threads);
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  if (threads > n) threads = n;
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&](std::size_t w) {
    for (std::size_t i = w; i < n; i += threads) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (std::size_t w = 1; w < threads; ++w) pool.emplace_back(worker, w);
    worker(0);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace blo
