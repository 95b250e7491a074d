#ifndef SPECDETECT_PARALLEL_H_
#define SPECDETECT_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace specdetect {

// Number of worker threads used by parallel_for. Defaults to the hardware
// concurrency; SPECDETECT_THREADS overrides it.
int worker_count();

// Runs fn(i) for i in [0, n). Each index is processed exactly once; callers
// write results into slot i so output order never depends on scheduling.
// The first exception thrown by any fn is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace specdetect

#endif  // SPECDETECT_PARALLEL_H_
