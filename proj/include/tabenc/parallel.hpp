#pragma once

#include <cstddef>
#include <functional>

namespace tabenc {

/// Worker count: TABENC_THREADS if set (>= 1), else hardware concurrency.
std::size_t worker_count();

/// Splits [0, n) into at most worker_count() contiguous ranges and runs
/// fn(worker, begin, end) for each, one thread per range. Range boundaries
/// depend only on n and the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace tabenc
