#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace omnistereo {

/// Worker count from OMNISTEREO_THREADS, or `fallback` when unset or unparsable.
inline int threads_from_env(int fallback = 1) {
  const char* env = std::getenv("OMNISTEREO_THREADS");
  if (env == nullptr || *env == '\0') return fallback;
  try {
    const int n = std::stoi(env);
    return n > 0 ? n : fallback;
  } catch (const std::exception&) {
    return fallback;
  }
}

/// Number of chunks parallel_for_chunks will use for `count` items.
inline int chunk_count(int count, int workers) { return count <= 0 ? 0 : std::clamp(workers, 1, count); }

/// Splits [0, count) into chunk_count(count, workers) contiguous chunks and
/// runs `fn(chunk, begin, end)` on each, one thread per chunk. Chunks are
/// disjoint, so callers writing only to their own range get output that does
/// not depend on the worker count. The first exception thrown by any chunk is
/// rethrown after all threads joined.
template <typename Fn>
void parallel_for_chunks(int count, int workers, Fn&& fn) {
  const int chunks = chunk_count(count, workers);
  if (chunks == 0) return;
  if (chunks == 1) {
    fn(0, 0, count);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chunks));
  pool.reserve(static_cast<std::size_t>(chunks));
  for (int w = 0; w < chunks; ++w) {
    const int begin = static_cast<int>(static_cast<long long>(count) * w / chunks);
    const int end = static_cast<int>(static_cast<long long>(count) * (w + 1) / chunks);
    pool.emplace_back([&, w, begin, end] {
      try {
        fn(w, begin, end);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Row-range form of parallel_for_chunks: `fn(begin, end)`.
template <typename Fn>
void parallel_for_rows(int count, int workers, Fn&& fn) {
  parallel_for_chunks(count, workers, [&](int, int begin, int end) { fn(begin, end); });
}

}  // namespace omnistereo
