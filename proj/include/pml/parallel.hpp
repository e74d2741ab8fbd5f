#pragma once

#include <cstddef>
#include <functional>

namespace pml {

/// Number of worker threads used by internal loops. Defaults to the number of
/// hardware threads, or `PML_THREADS` when that variable is set.
int num_threads();
void set_num_threads(int n);

/// Calls `body(begin, end)` over contiguous blocks covering [0, n).
///
/// Callers write results to per-index slots and reduce afterwards in index
/// order, so the output never depends on how blocks are scheduled.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace pml
