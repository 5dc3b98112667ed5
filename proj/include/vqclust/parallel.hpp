#pragma once

#include <cstddef>
#include <functional>

namespace vqclust {

// Global worker count for data-parallel loops (set from the CLI --threads flag).
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks by index,
// one per worker, so results never depend on scheduling. Each index must
// write only its own output slot.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace vqclust
