#pragma once

#include <cstddef>
#include <functional>

namespace blendcast {

// Global worker cap used by parallel_for (the CLI's --jobs). 1 = serial.
void set_max_jobs(std::size_t jobs);
std::size_t max_jobs();

// Runs body(i) for i in [0, n) over contiguous chunks. Every index is visited
// exactly once, so callers that write only to slot i stay deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace blendcast
