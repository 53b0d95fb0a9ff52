#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace otflow {

// Worker cap: OTFLOW_THREADS if set, else 1. Per-node loops write disjoint
// slots and all reductions run sequentially afterwards, so results are
// byte-identical for any worker count.
inline int worker_count() {
  static int cached = [] {
    const char* env = std::getenv("OTFLOW_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    if (n < 1) return 1;
    unsigned hw = std::thread::hardware_concurrency();
    if (hw > 0) n = std::min(n, static_cast<int>(hw));
    return n;
  }();
  return cached;
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  int workers = worker_count();
  if (workers <= 1 || n < 512) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::exception_ptr> errors(workers, nullptr);
  for (int w = 0; w < workers; ++w) {
    std::size_t b = static_cast<std::size_t>(w) * chunk;
    std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, &errors, w, b, e] {
      try {
        for (std::size_t i = b; i < e; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);
}

}  // namespace otflow
