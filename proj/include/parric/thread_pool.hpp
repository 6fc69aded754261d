// Minimal fork-join worker pool. run(n, fn) executes fn(0..n-1) across the
// workers and returns once every index has completed, which is the barrier
// between tree levels. Tasks must only write to slots owned by their index;
// under that contract the results are independent of the worker count and
// of scheduling order.
#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace parric {

class WorkerPool {
 public:
  explicit WorkerPool(int workers) : requested_(workers < 1 ? 1 : workers) {
    // The calling thread participates, so spawn one fewer.
    for (int i = 0; i + 1 < requested_; ++i)
      threads_.emplace_back([this] { worker_loop(); });
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    {
      std::lock_guard lk(mutex_);
      stop_ = true;
    }
    wake_cv_.notify_all();
    for (std::thread& t : threads_) t.join();
  }

  int worker_count() const { return requested_; }

  /// Not reentrant: tasks must not call run() themselves. The first task
  /// exception cancels the indices not yet claimed and is rethrown here.
  void run(int n, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    if (threads_.empty()) {
      for (int i = 0; i < n; ++i) fn(i);
      return;
    }
    auto job = std::make_shared<Job>();
    job->fn = &fn;
    job->total = n;
    job->pending = n;
    {
      std::lock_guard lk(mutex_);
      job_ = job;
      ++generation_;
    }
    wake_cv_.notify_all();
    drain(*job);
    std::unique_lock lk(mutex_);
    done_cv_.wait(lk, [&] { return job->pending == 0; });
    if (job->error) std::rethrow_exception(job->error);
  }

 private:
  struct Job {
    const std::function<void(int)>* fn = nullptr;
    int total = 0;
    std::atomic<int> next{0};
    int pending = 0;             // guarded by the pool mutex
    std::exception_ptr error;    // guarded by the pool mutex
  };

  void drain(Job& job) {
    while (true) {
      const int i = job.next.fetch_add(1, std::memory_order_relaxed);
      if (i >= job.total) return;
      std::exception_ptr err;
      try {
        (*job.fn)(i);
      } catch (...) {
        err = std::current_exception();
      }
      int skipped = 0;
      if (err) {
        // Stop handing out further indices; the range [cut, total) will
        // never be claimed, so account for it here.
        const int cut = job.next.exchange(job.total,
                                          std::memory_order_relaxed);
        if (cut < job.total) skipped = job.total - cut;
      }
      std::lock_guard lk(mutex_);
      if (err && !job.error) job.error = err;
      job.pending -= 1 + skipped;
      if (job.pending == 0) done_cv_.notify_all();
    }
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    std::shared_ptr<Job> job;
    while (true) {
      {
        std::unique_lock lk(mutex_);
        wake_cv_.wait(lk,
                      [this, seen] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        job = job_;
      }
      drain(*job);
      job.reset();
    }
  }

  const int requested_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_cv_;
  std::condition_variable done_cv_;
  std::shared_ptr<Job> job_;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace parric
