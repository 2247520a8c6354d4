#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace tlf {

// Runs fn(i) for i in [0, n) on `workers` threads using contiguous chunks.
// Results are written by index, so output order never depends on the worker
// count. The first exception thrown by any worker is rethrown.
inline void parallel_for(size_t n, unsigned workers, const std::function<void(size_t)>& fn) {
  if (workers <= 1 || n < 2) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  workers = static_cast<unsigned>(std::min<size_t>(workers, n));
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    size_t begin = w * chunk;
    size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&, w, begin, end] {
      try {
        for (size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <typename In, typename Fn>
auto parallel_map(const std::vector<In>& items, unsigned workers, Fn fn)
    -> std::vector<decltype(fn(items[0]))> {
  std::vector<decltype(fn(items[0]))> out(items.size());
  parallel_for(items.size(), workers, [&](size_t i) { out[i] = fn(items[i]); });
  return out;
}

}  // namespace tlf
