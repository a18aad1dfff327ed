#include "stum/numerics/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace stum::num {

namespace {

int read_worker_count() {
  if (const char* env = std::getenv("STUM_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  return static_cast<int>(hw > 8 ? 8 : hw);
}

// Minimal persistent pool. Work items are contiguous chunk ranges; the
// calling thread processes chunk 0 itself.
class Pool {
 public:
  Pool() : n_workers_(read_worker_count()) {
    for (int t = 1; t < n_workers_; ++t) {
      threads_.emplace_back([this, t] { worker_loop(t); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      shutdown_ = true;
    }
    cv_.notify_all();
    for (auto& th : threads_) th.join();
  }

  int size() const { return n_workers_; }

  void run(size_t n, const std::function<void(size_t)>& fn) {
    if (n == 0) return;
    int chunks = n_workers_;
    if (static_cast<size_t>(chunks) > n) chunks = static_cast<int>(n);
    if (chunks == 1) {
      for (size_t i = 0; i < n; ++i) fn(i);
      return;
    }
    {
      std::lock_guard<std::mutex> lk(mu_);
      job_fn_ = &fn;
      job_n_ = n;
      job_chunks_ = chunks;
      pending_ = chunks - 1;
      ++generation_;
    }
    cv_.notify_all();
    run_chunk(0);
    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    job_fn_ = nullptr;
  }

 private:
  void run_chunk(int c) {
    size_t lo = job_n_ * static_cast<size_t>(c) / job_chunks_;
    size_t hi = job_n_ * static_cast<size_t>(c + 1) / job_chunks_;
    for (size_t i = lo; i < hi; ++i) (*job_fn_)(i);
  }

  void worker_loop(int id) {
    uint64_t seen = 0;
    for (;;) {
      std::unique_lock<std::mutex> lk(mu_);
      cv_.wait(lk, [&] { return shutdown_ || generation_ != seen; });
      if (shutdown_) return;
      seen = generation_;
      int chunk = id;
      if (chunk >= job_chunks_) {
        // Not needed for this job; still counted as pending? No: pending_
        // only counts chunks 1..job_chunks_-1, so skip without decrement.
        continue;
      }
      lk.unlock();
      run_chunk(chunk);
      lk.lock();
      if (--pending_ == 0) done_cv_.notify_one();
    }
  }

  int n_workers_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  bool shutdown_ = false;
  uint64_t generation_ = 0;
  const std::function<void(size_t)>* job_fn_ = nullptr;
  size_t job_n_ = 0;
  int job_chunks_ = 1;
  int pending_ = 0;
};

Pool& pool() {
  static Pool p;
  return p;
}

}  // namespace

int worker_count() { return pool().size(); }

void parallel_for(size_t n, const std::function<void(size_t)>& fn) { pool().run(n, fn); }

}  // namespace stum::num
