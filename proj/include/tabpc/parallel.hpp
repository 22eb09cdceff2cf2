#pragma once

#include <cstddef>
#include <functional>

namespace tabpc {

/// Worker count: TABGEN_THREADS if set to a positive integer, otherwise the
/// hardware concurrency.
std::size_t thread_count();

/// Runs `body(chunk_begin, chunk_end, chunk_index)` over [0, n) split into
/// fixed-size chunks.  Chunk boundaries depend only on `n` and `chunk`, never
/// on the thread count, so per-chunk results reduced in chunk order are
/// reproducible.
void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

inline std::size_t chunk_count(std::size_t n, std::size_t chunk) {
  return chunk == 0 ? 0 : (n + chunk - 1) / chunk;
}

}  // namespace tabpc
