#include "teco/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace teco {

namespace {
thread_local bool in_worker = false;
}

struct ThreadPool::Impl {
  std::vector<std::thread> workers;
  std::mutex mu;
  std::condition_variable cv_work;
  std::condition_variable cv_done;
  const std::function<void(int64_t, int64_t)>* job = nullptr;
  int64_t job_n = 0;
  int chunks = 0;
  uint64_t generation = 0;
  int pending = 0;
  bool stop = false;
  int nthreads = 1;

  void worker(int index) {
    in_worker = true;
    uint64_t seen = 0;
    for (;;) {
      const std::function<void(int64_t, int64_t)>* fn;
      int64_t n;
      int total;
      {
        std::unique_lock<std::mutex> lock(mu);
        cv_work.wait(lock, [&] { return stop || generation != seen; });
        if (stop) return;
        seen = generation;
        fn = job;
        n = job_n;
        total = chunks;
      }
      if (index < total) {
        const int64_t begin = n * index / total;
        const int64_t end = n * (index + 1) / total;
        if (begin < end) (*fn)(begin, end);
      }
      {
        std::lock_guard<std::mutex> lock(mu);
        if (--pending == 0) cv_done.notify_one();
      }
    }
  }

  void shutdown() {
    {
      std::lock_guard<std::mutex> lock(mu);
      stop = true;
    }
    cv_work.notify_all();
    for (auto& t : workers) t.join();
    workers.clear();
    stop = false;
  }
};

ThreadPool::ThreadPool() : impl_(new Impl) {
  int n = 1;
  if (const char* env = std::getenv("TECO_THREADS")) {
    n = std::max(1, std::atoi(env));
  }
  set_threads(n);
}

ThreadPool::~ThreadPool() {
  impl_->shutdown();
  delete impl_;
}

ThreadPool& ThreadPool::instance() {
  static ThreadPool pool;
  return pool;
}

int ThreadPool::threads() const { return impl_->nthreads; }

void ThreadPool::set_threads(int n) {
  n = std::max(1, n);
  if (n == impl_->nthreads && static_cast<int>(impl_->workers.size()) == n - 1) {
    return;
  }
  impl_->shutdown();
  impl_->nthreads = n;
  for (int i = 0; i < n - 1; ++i) {
    impl_->workers.emplace_back([this, i] { impl_->worker(i); });
  }
}

void ThreadPool::parallel_for(
    int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  const int total = impl_->nthreads;
  if (total == 1 || in_worker || n == 1) {
    fn(0, n);
    return;
  }
  {
    std::lock_guard<std::mutex> lock(impl_->mu);
    impl_->job = &fn;
    impl_->job_n = n;
    impl_->chunks = total;
    impl_->pending = total - 1;
    ++impl_->generation;
  }
  impl_->cv_work.notify_all();
  // Main thread takes the last chunk.
  {
    const int64_t begin = n * (total - 1) / total;
    if (begin < n) fn(begin, n);
  }
  std::unique_lock<std::mutex> lock(impl_->mu);
  impl_->cv_done.wait(lock, [&] { return impl_->pending == 0; });
}

}  // namespace teco
