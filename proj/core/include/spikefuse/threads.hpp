#pragma once

#include <cstddef>
#include <functional>

namespace spikefuse {

/// Worker thread count: SPIKEFUSE_THREADS env var if set, else hardware
/// concurrency. Always at least 1.
std::size_t worker_count();

/// Run fn(begin, end) over deterministic contiguous chunks of [0, n).
/// Chunk boundaries depend only on n and the worker count, and every
/// chunk computes the same values it would single-threaded, so results
/// are bit-identical for any thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

/// Ask the allocator to retain freed large blocks instead of returning
/// them to the kernel. Training allocates and frees multi-megabyte
/// activation buffers every step; without this, glibc services each one
/// with mmap/munmap and the syscall churn dominates wall time. Call once
/// at program start. No-op where the allocator lacks the knobs.
void keep_freed_memory();

}  // namespace spikefuse
