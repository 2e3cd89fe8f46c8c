#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace geoflow {

// Worker cap for internal loops. 0 means "auto" (hardware concurrency).
// Initialised from GEOFLOW_THREADS on first use.
void set_num_threads(int threads);
int num_threads();

// Runs fn(i) for i in [0, n) over a static partition. Callers write results
// into per-index slots, so output never depends on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace geoflow
