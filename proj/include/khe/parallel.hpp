#pragma once

#include <cstddef>
#include <functional>

namespace khe {

/// Global cap on worker threads used by every parallel loop in the library.
/// 0 means "use std::thread::hardware_concurrency()".
void set_max_threads(unsigned n);
unsigned max_threads();

/// Calls body(i) for every i in [0, n). Work is split into contiguous chunks;
/// each index is processed by exactly one thread, so any per-index result is
/// independent of the number of threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace khe
