#pragma once

#include <cstddef>
#include <functional>

namespace lgdist {

/// Worker cap: LGDIST_THREADS if set to a positive integer, otherwise the
/// hardware concurrency.
std::size_t worker_count();

/// Calls fn(i) for i in [0, n). Work is split into contiguous blocks; callers
/// must write only to per-index outputs so results do not depend on the
/// number of workers. Calls made from inside a worker run inline.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace lgdist
