#pragma once

#include <cstddef>
#include <functional>

namespace stum::num {

// Worker count: STUM_THREADS env var if set, else hardware concurrency capped
// at 8. Always at least 1.
int worker_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
// worker. Each index is processed by exactly one thread, so writes to
// disjoint per-index slices are race-free. Callers must arrange reductions so
// that each accumulator is owned by a single index (e.g. parallelize over the
// kept axis); results are then independent of the worker count.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace stum::num
