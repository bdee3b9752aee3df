#pragma once

#include <cstddef>
#include <functional>

namespace manetl {

// Worker cap from MANETL_THREADS (0 or unset = hardware concurrency).
std::size_t worker_count();

// Runs fn(i) for i in [0, n). Callers only hand over work whose iterations
// write disjoint outputs, so results do not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace manetl
