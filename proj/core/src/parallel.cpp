#include "svf/parallel.hpp"

namespace svf {

ThreadPool::ThreadPool(int n_threads) {
  if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
  if (n_threads < 1) n_threads = 1;
  for (int i = 0; i < n_threads - 1; ++i) {
    workers_.emplace_back([this] { worker_loop(); });
  }
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    stop_ = true;
  }
  cv_work_.notify_all();
  for (auto& w : workers_) w.join();
}

void ThreadPool::worker_loop() {
  uint64_t seen = 0;
  while (true) {
    const std::function<void(int)>* job = nullptr;
    {
      std::unique_lock<std::mutex> lock(mu_);
      cv_work_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      job = job_;
    }
    while (true) {
      int c = next_chunk_.fetch_add(1);
      if (c >= job_chunks_) break;
      (*job)(c);
      std::lock_guard<std::mutex> lock(mu_);
      if (--pending_ == 0) cv_done_.notify_all();
    }
  }
}

void ThreadPool::run_chunks(int n_chunks, const std::function<void(int)>& fn) {
  if (n_chunks <= 0) return;
  if (workers_.empty()) {
    for (int c = 0; c < n_chunks; ++c) fn(c);
    return;
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    job_ = &fn;
    job_chunks_ = n_chunks;
    next_chunk_.store(0);
    pending_ = n_chunks;
    ++generation_;
  }
  cv_work_.notify_all();
  // The calling thread helps.
  while (true) {
    int c = next_chunk_.fetch_add(1);
    if (c >= n_chunks) break;
    fn(c);
    std::lock_guard<std::mutex> lock(mu_);
    if (--pending_ == 0) cv_done_.notify_all();
  }
  std::unique_lock<std::mutex> lock(mu_);
  cv_done_.wait(lock, [&] { return pending_ == 0; });
  job_ = nullptr;
}

void parallel_for_chunks(ThreadPool* pool, int64_t n_items, int n_chunks,
                         const std::function<void(int, int64_t, int64_t)>& fn) {
  if (n_items <= 0) return;
  if (n_chunks > n_items) n_chunks = static_cast<int>(n_items);
  auto body = [&](int c) {
    ChunkRange r = chunk_range(n_items, n_chunks, c);
    fn(c, r.begin, r.end);
  };
  if (pool == nullptr) {
    for (int c = 0; c < n_chunks; ++c) body(c);
  } else {
    pool->run_chunks(n_chunks, body);
  }
}

} // namespace svf
