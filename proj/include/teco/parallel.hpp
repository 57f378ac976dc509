#pragma once

// Minimal persistent worker pool. parallel_for splits [0, n) into one
// contiguous chunk per thread, so every output element is written by
// exactly one thread and results are identical for any thread count.
// Nested calls from inside a worker run inline.

#include <cstdint>
#include <functional>

namespace teco {

class ThreadPool {
 public:
  static ThreadPool& instance();

  // Number of threads used by parallel_for (>= 1). Recreates workers.
  void set_threads(int n);
  int threads() const;

  // fn(begin, end) over disjoint contiguous ranges covering [0, n).
  void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

  ~ThreadPool();

 private:
  ThreadPool();
  struct Impl;
  Impl* impl_;
};

inline void parallel_for(int64_t n,
                         const std::function<void(int64_t, int64_t)>& fn) {
  ThreadPool::instance().parallel_for(n, fn);
}

}  // namespace teco
