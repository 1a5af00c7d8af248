#pragma once

#include <cstddef>
#include <functional>

namespace tsqr {

/// Runs body(i) for i in [0, count) on up to `threads` worker threads.
/// Work items must write only to their own output slot; results are then
/// independent of the thread count. The exception thrown by the lowest
/// failing index is rethrown after all workers finish.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

/// Number of threads to use when the caller passes 0 ("auto").
[[nodiscard]] int resolve_threads(int requested) noexcept;

}  // namespace tsqr
