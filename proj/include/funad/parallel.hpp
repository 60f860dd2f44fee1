#pragma once

#include <cstddef>
#include <functional>

namespace funad {

/// Worker count used by parallel loops. 0 restores the hardware default.
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Runs body(begin, end) over a partition of [0, n).
///
/// Callers must make each index's result independent of the partition so
/// output does not depend on the thread count. Exceptions thrown by a worker
/// are rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

/// Runs body(chunk, begin, end) over exactly `chunks` contiguous ranges of
/// [0, n). The partition depends only on (n, chunks), never on the thread
/// count, so per-chunk partial sums reduced in chunk order are deterministic.
void parallel_chunks(std::size_t n, std::size_t chunks,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

}  // namespace funad
