#pragma once

#include <cstddef>
#include <functional>

namespace esi {

// Parallel lane count: hardware concurrency, overridable with the
// ESI_THREADS environment variable (1 disables threading).
int max_lanes();

// Splits [0, n) into at most max_lanes() contiguous chunks and runs
// fn(lane, begin, end) for each, blocking until all complete. The partition
// depends only on n and the lane count, so per-lane partial results combined
// in lane order are reproducible. fn must not throw. Not reentrant.
void parallel_chunks(std::size_t n, const std::function<void(int, std::size_t, std::size_t)>& fn);

// Same, with chunk starts rounded to multiples of `granule` (vectorized
// elementwise kernels over 64-byte-aligned buffers stay aligned per chunk).
void parallel_chunks_granular(std::size_t n, std::size_t granule,
                              const std::function<void(int, std::size_t, std::size_t)>& fn);

}  // namespace esi
