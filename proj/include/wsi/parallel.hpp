#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace wsi {

/// splitmix64 finalizer applied to (master, stream); used to derive
/// per-replication and per-chunk seeds independent of scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept;

/// Worker count: `requested` when positive, else WSI_THREADS, else the
/// hardware concurrency.
unsigned resolve_threads(int requested = 0);

/// Runs body(i) for i in [0, count) on up to `threads` workers. Each index
/// runs exactly once; the first exception thrown is rethrown after all
/// workers join.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body);

} // namespace wsi
