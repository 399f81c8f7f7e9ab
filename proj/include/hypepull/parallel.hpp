#pragma once

#include <cstddef>
#include <functional>

namespace hypepull {

/// Worker count: HYPEPULL_THREADS if set (>= 1), else hardware concurrency.
int worker_count();

/// Calls fn(i) for i in [0, n) on up to worker_count() threads. Indices are
/// split into contiguous static blocks; fn must write only to its own slot so
/// results do not depend on the partitioning. The first exception thrown by
/// any worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace hypepull
