#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sheq {

/// Runs work(index, worker_slot) for index = 0..count-1 across a small pool
/// and folds each result in strictly increasing index order. The fold order
/// is therefore independent of both the thread count and the scheduling, so
/// floating-point reductions stay bit-stable.
template <class Work, class Fold>
void ordered_parallel_reduce(std::int64_t count, int threads, Work&& work, Fold&& fold) {
  if (count <= 0) return;
  if (threads <= 1 || count == 1) {
    for (std::int64_t i = 0; i < count; ++i) {
      auto result = work(i, 0);
      fold(i, result);
    }
    return;
  }

  std::atomic<std::int64_t> next_claim{0};
  std::mutex mutex;
  std::condition_variable turn;
  std::int64_t next_fold = 0;
  std::exception_ptr failure;

  auto run_worker = [&](int slot) {
    for (;;) {
      const std::int64_t index = next_claim.fetch_add(1);
      if (index >= count) return;
      try {
        auto result = work(index, slot);
        std::unique_lock<std::mutex> lock(mutex);
        turn.wait(lock, [&] { return next_fold == index || failure != nullptr; });
        if (failure) return;
        fold(index, result);
        ++next_fold;
        turn.notify_all();
      } catch (...) {
        std::lock_guard<std::mutex> lock(mutex);
        if (!failure) failure = std::current_exception();
        next_claim.store(count);
        turn.notify_all();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  const int n_workers = static_cast<int>(std::min<std::int64_t>(threads, count));
  pool.reserve(n_workers);
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(run_worker, w);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

/// Default worker count for sample-parallel studies.
inline int default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace sheq
