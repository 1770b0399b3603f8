#pragma once

#include <cstddef>
#include <functional>

namespace camelion {

/// Worker count: CAMELION_THREADS if set and positive, else hardware concurrency.
unsigned worker_count();

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunks never share
/// output ranges, so results do not depend on the worker count as long as the
/// body only writes to indices inside its chunk.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace camelion
