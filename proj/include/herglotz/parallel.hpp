#pragma once

// Static-partition parallel loops. Each index is processed by exactly one
// worker and results are written to index-owned storage, so output never
// depends on the thread count.

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace herglotz {

// HERGLOTZ_THREADS caps the worker count; defaults to the hardware concurrency.
inline unsigned thread_limit() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HERGLOTZ_THREADS")) {
    try {
      long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(std::min<long>(v, 256));
    } catch (const std::exception&) {
    }
  }
  return hw;
}

// Calls fn(i) for i in [0, n). The first exception thrown (lowest chunk) is rethrown.
template <class Fn>
void parallel_for(size_t n, Fn&& fn, size_t min_chunk = 64) {
  size_t workers = std::min<size_t>(thread_limit(), (n + min_chunk - 1) / std::max<size_t>(min_chunk, 1));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  auto run = [&](size_t w) {
    size_t begin = n * w / workers;
    size_t end = n * (w + 1) / workers;
    try {
      for (size_t i = begin; i < end; ++i) fn(i);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  for (size_t w = 1; w < workers; ++w) pool.emplace_back(run, w);
  run(0);
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace herglotz
