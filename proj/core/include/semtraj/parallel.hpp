#pragma once

#include <cstddef>
#include <functional>

namespace semtraj {

/// Caps the number of worker threads used by parallel_for. 0 restores the
/// hardware default. Intended to be set once, from the CLI --threads flag.
void set_thread_cap(unsigned cap);
unsigned thread_cap();

/// Runs fn(i) for i in [begin, end). Work is split into contiguous blocks,
/// one per worker. Falls back to a plain loop when the range is small or the
/// cap is 1. fn must be safe to call concurrently for distinct i; writes must
/// go to per-index slots if the caller wants deterministic output.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& fn);

}  // namespace semtraj
