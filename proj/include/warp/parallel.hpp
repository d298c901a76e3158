#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace warp {

// Runs fn(0..n_chunks-1) across up to `workers` threads. Chunk boundaries are
// fixed by the caller, so any per-chunk results are independent of the worker
// count; only completion order varies.
inline void parallel_chunks(int64_t n_chunks, int workers,
                            const std::function<void(int64_t)>& fn) {
  if (workers <= 1 || n_chunks <= 1) {
    for (int64_t i = 0; i < n_chunks; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  auto drain = [&] {
    for (;;) {
      const int64_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n_chunks) return;
      fn(i);
    }
  };
  const int extra = std::min<int>(workers - 1, static_cast<int>(n_chunks - 1));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(extra));
  for (int i = 0; i < extra; ++i) threads.emplace_back(drain);
  drain();
  for (std::thread& t : threads) t.join();
}

}  // namespace warp
