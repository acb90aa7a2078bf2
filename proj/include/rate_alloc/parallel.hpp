#pragma once

#include <cstddef>
#include <functional>

namespace rate_alloc {

// Worker count: RATE_ALLOC_THREADS when set to a positive integer, otherwise
// the hardware concurrency (at least 1).
std::size_t worker_count();

// Runs fn(i) for i in [0, n). Each index is visited exactly once; fn must only
// write state owned by its index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace rate_alloc
