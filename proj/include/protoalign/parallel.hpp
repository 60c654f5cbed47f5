#pragma once

#include <cstddef>
#include <functional>

namespace protoalign {

/// Worker count: PROTOALIGN_THREADS when set (clamped to [1, 256]),
/// otherwise hardware concurrency.
std::size_t thread_count();

/// Runs body(i) for i in [0, n) across up to thread_count() threads.
/// Each index is handled by exactly one call; callers write results into
/// per-index slots and reduce sequentially afterwards, so output never
/// depends on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t min_per_thread = 64);

}  // namespace protoalign
