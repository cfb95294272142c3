#pragma once

#include <cstddef>
#include <functional>

namespace doem {

// Worker cap shared by every parallel loop in the library. 0 means
// hardware concurrency.
void set_max_threads(int n);
int max_threads();

// Runs body(i) for i in [0, n). Each index is touched by exactly one worker;
// callers write results into per-index slots so the outcome never depends
// on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace doem
