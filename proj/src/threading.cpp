#include "roomgen/threading.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace roomgen {

int thread_count() {
  static const int n = [] {
    if (const char* env = std::getenv("ROOMGEN_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1) return std::min(v, 64);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(std::min(hw, 16u));
  }();
  return n;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t, int)>& fn) {
  const int workers = std::min<int64_t>(thread_count(), std::max<int64_t>(n, 1));
  if (workers <= 1) {
    fn(0, n, 0);
    return;
  }
  const int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int64_t begin = w * chunk;
    const int64_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end, w] { fn(begin, end, w); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace roomgen
