#pragma once

#include <cstddef>
#include <functional>

namespace lowfp {

/// Worker count used by row-parallel loops. Defaults to the hardware
/// concurrency; `LOWFP_THREADS` overrides it at first use.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Calls fn(begin, end) over disjoint contiguous chunks of [0, n). Work items
/// must be independent; results never depend on the chunking.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace lowfp
