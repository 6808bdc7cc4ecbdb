#include "sfield/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace sfield {

int worker_count() {
  static const int n = [] {
    const char* env = std::getenv("SCENEFIELD_WORKERS");
    if (!env) return 1;
    const int v = std::atoi(env);
    return v >= 1 ? v : 1;
  }();
  return n;
}

void parallel_chunks(std::size_t n_chunks,
                     const std::function<void(std::size_t)>& fn) {
  const int workers = worker_count();
  if (workers <= 1 || n_chunks <= 1) {
    for (std::size_t i = 0; i < n_chunks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_chunks) break;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const int extra = std::min<std::size_t>(workers, n_chunks) - 1;
  pool.reserve(extra);
  for (int t = 0; t < extra; ++t) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
}

}  // namespace sfield
