#pragma once

#include <cstddef>
#include <functional>

namespace cadbench {

// Worker count: CADBENCH_THREADS if set to a positive integer, else the
// hardware concurrency (at least 1).
std::size_t default_workers();

// Runs body(i) for i in [0, n) across up to `workers` threads. Each index is
// visited exactly once; the first exception thrown is rethrown on the caller.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body);

}  // namespace cadbench
