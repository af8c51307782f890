#pragma once

#include <cstddef>
#include <functional>

namespace pspl {

// Worker-thread cap from PSPL_THREADS (0 or unset = hardware concurrency).
// Read once on first use.
int worker_threads();

// Runs fn(i) for i in [0, n). Each index is processed exactly once by one
// thread; fn must write only to index-disjoint locations, which keeps results
// bitwise independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace pspl
