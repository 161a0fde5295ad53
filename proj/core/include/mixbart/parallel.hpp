#pragma once

#include <cstddef>
#include <functional>

namespace mixbart {

// Worker count: an explicit positive request wins, then MIXBART_THREADS,
// then the hardware concurrency.
int resolve_threads(int requested = 0);

// Runs body(begin, end) over contiguous chunks of [0, n) on up to `threads`
// workers. Chunking never affects results as long as body only writes to
// its own index range.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t begin, std::size_t end)>& body);

}  // namespace mixbart
