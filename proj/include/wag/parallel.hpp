#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace wag {

/// Number of worker threads used by data-parallel kernels. 0 means "ask the
/// environment" (WAG_THREADS, then 1).
struct Parallelism {
  unsigned threads = 1;

  unsigned resolved() const noexcept { return threads == 0 ? 1u : threads; }

  static Parallelism from_env() {
    Parallelism p;
    if (const char* env = std::getenv("WAG_THREADS")) {
      try {
        const long v = std::stol(env);
        if (v > 0) p.threads = static_cast<unsigned>(v);
      } catch (...) {
      }
    }
    return p;
  }
};

/// Run body(begin, end) over contiguous chunks of [0, n). Each index is
/// visited exactly once; chunk boundaries do not affect per-index results.
/// `grain` is the smallest chunk worth handing to its own thread.
template <typename Body>
void parallel_for(std::size_t n, Parallelism par, Body&& body, std::size_t grain = 1024) {
  const std::size_t workers = std::min<std::size_t>(
      par.resolved(), std::max<std::size_t>(n / std::max<std::size_t>(grain, 1), 1));
  if (workers <= 1 || n == 0) {
    body(std::size_t{0}, n);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace wag
