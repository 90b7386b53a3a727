#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace advchar {

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, count). Work is split into fixed strided slices so
// the set of indices each worker sees does not depend on timing. fn must only
// write to slot-i state. The first exception thrown (lowest index) is
// rethrown after all workers join.
template <typename F>
void parallel_for(std::size_t count, int workers, F&& fn) {
  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(resolve_workers(workers)), count);
  if (n_workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::mutex mu;
  std::size_t failed_index = count;
  std::exception_ptr failure;
  std::vector<std::thread> threads;
  threads.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) {
    threads.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += n_workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (i < failed_index) {
            failed_index = i;
            failure = std::current_exception();
          }
          return;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace advchar
