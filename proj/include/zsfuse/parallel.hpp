#pragma once

#include <cstddef>
#include <functional>

namespace zsfuse {

// Runs fn(0..count) across up to `parallelism` worker threads. Each index is
// processed exactly once; the first exception thrown by any worker is
// rethrown on the calling thread after all workers join.
void parallel_for(std::size_t count, std::size_t parallelism,
                  const std::function<void(std::size_t)>& fn);

}  // namespace zsfuse
