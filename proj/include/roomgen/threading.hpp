#pragma once

#include <cstdint>
#include <functional>

namespace roomgen {

// Worker count: ROOMGEN_THREADS if set, else hardware concurrency.
// Note: gradient reductions sum per-thread partials in thread order, so
// bitwise reproducibility holds for a fixed thread count.
int thread_count();

// Splits [0, n) into contiguous chunks, one per worker. fn(begin, end,
// worker_index). Runs inline when a single worker suffices.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t, int)>& fn);

}  // namespace roomgen
