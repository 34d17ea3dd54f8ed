#pragma once

#include <cstddef>
#include <functional>

namespace sweepkit {

/// Worker count: SWEEPKIT_THREADS when set to a positive integer, otherwise
/// std::thread::hardware_concurrency() (at least 1).
std::size_t worker_count();

/// Calls body(i) for every i in [0, n), split into contiguous chunks across
/// worker_count() threads. Bodies must write only to their own slots. The
/// first exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace sweepkit
