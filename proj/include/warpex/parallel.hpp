#pragma once

#include <cstddef>
#include <functional>

namespace warpex {

/// Upper bound on worker threads used by parallel loops; 0 selects hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs body(i) for i in [0, n). Iterations must be independent; the first exception thrown
/// by any iteration is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace warpex
