#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace svf {

// Work is always split into a fixed number of chunks chosen by the caller,
// never by thread count. Chunk c covers [begin, end) of the item range and
// writes only chunk-local state, so any reduction done afterwards in chunk
// order gives bit-identical results for every thread count (including 1).
class ThreadPool {
 public:
  explicit ThreadPool(int n_threads = 0);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  int thread_count() const { return static_cast<int>(workers_.size()) + 1; }

  // Runs fn(chunk) for chunk in [0, n_chunks). Blocks until all chunks ran.
  void run_chunks(int n_chunks, const std::function<void(int)>& fn);

 private:
  void worker_loop();

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_work_;
  std::condition_variable cv_done_;
  const std::function<void(int)>* job_ = nullptr;
  int job_chunks_ = 0;
  std::atomic<int> next_chunk_{0};
  int pending_ = 0;
  uint64_t generation_ = 0;
  bool stop_ = false;
};

struct ChunkRange {
  int64_t begin = 0;
  int64_t end = 0;
};

inline ChunkRange chunk_range(int64_t n_items, int n_chunks, int chunk) {
  int64_t base = n_items / n_chunks;
  int64_t rem = n_items % n_chunks;
  int64_t begin = chunk * base + std::min<int64_t>(chunk, rem);
  int64_t size = base + (chunk < rem ? 1 : 0);
  return {begin, begin + size};
}

// Default chunk count used by training and rendering loops. Fixed so that
// per-chunk reductions are independent of how many threads execute them.
constexpr int kDefaultChunks = 64;

void parallel_for_chunks(ThreadPool* pool, int64_t n_items, int n_chunks,
                         const std::function<void(int, int64_t, int64_t)>& fn);

} // namespace svf
