#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace gs4d {

/// Fixed-size worker pool with a chunked parallel_for.
///
/// Ranges are split into one contiguous chunk per worker (static partition),
/// so the set of elements a chunk sees never depends on scheduling. Callers
/// that need bit-reproducible reductions merge chunk results themselves in
/// index order.
class ThreadPool {
 public:
  explicit ThreadPool(int threads) {
    if (threads < 1) threads = 1;
    for (int i = 1; i < threads; ++i) {
      workers_.emplace_back([this, i] { worker_loop(i); });
    }
  }

  ~ThreadPool() {
    {
      std::unique_lock<std::mutex> lock(mutex_);
      stop_ = true;
    }
    cv_task_.notify_all();
    for (auto& w : workers_) w.join();
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  int size() const { return int(workers_.size()) + 1; }

  /// Runs fn(begin, end) over [0, n) split into size() contiguous chunks.
  /// The calling thread runs chunk 0; returns after all chunks finish.
  void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    const int chunks = size();
    const std::int64_t per = (n + chunks - 1) / chunks;
    if (chunks == 1 || per >= n) {
      fn(0, n);
      return;
    }
    int live = 0;
    for (int i = 1; i < chunks; ++i) {
      if (i * per < n) ++live;
    }
    {
      std::unique_lock<std::mutex> lock(mutex_);
      task_ = &fn;
      task_n_ = n;
      task_per_ = per;
      pending_ = live;
      ++generation_;
    }
    cv_task_.notify_all();
    fn(0, per);
    std::unique_lock<std::mutex> lock(mutex_);
    cv_done_.wait(lock, [this] { return pending_ == 0; });
    task_ = nullptr;
  }

  /// As parallel_for, but also passes the chunk index so callers can write
  /// per-chunk partials and merge them in a fixed order afterwards.
  void parallel_for_chunks(std::int64_t n,
                           const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    const std::int64_t per = (n + size() - 1) / size();
    parallel_for(n, [&](std::int64_t b, std::int64_t e) { fn(int(b / per), b, e); });
  }

 private:
  void worker_loop(int index) {
    std::uint64_t seen = 0;
    while (true) {
      const std::function<void(std::int64_t, std::int64_t)>* task = nullptr;
      std::int64_t begin = 0, end = 0;
      {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_task_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        begin = index * task_per_;
        end = std::min(begin + task_per_, task_n_);
        if (begin < task_n_) task = task_;
      }
      if (task == nullptr) continue;
      (*task)(begin, end);
      {
        std::unique_lock<std::mutex> lock(mutex_);
        if (--pending_ == 0) cv_done_.notify_all();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable cv_task_;
  std::condition_variable cv_done_;
  const std::function<void(std::int64_t, std::int64_t)>* task_ = nullptr;
  std::int64_t task_n_ = 0;
  std::int64_t task_per_ = 0;
  int pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

/// Process-wide pool. set_global_threads(0) sizes it to the hardware.
inline ThreadPool& global_pool_storage(int reset_threads = -1) {
  static std::unique_ptr<ThreadPool> pool;
  static std::mutex m;
  std::unique_lock<std::mutex> lock(m);
  if (!pool || reset_threads >= 0) {
    int n = reset_threads;
    if (n <= 0) n = int(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    pool = std::make_unique<ThreadPool>(n);
  }
  return *pool;
}

inline ThreadPool& global_pool() { return global_pool_storage(); }

inline void set_global_threads(int n) { global_pool_storage(n <= 0 ? 0 : n); }

inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
  global_pool().parallel_for(n, fn);
}

}  // namespace gs4d
