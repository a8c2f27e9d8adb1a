#pragma once

#include <cstddef>
#include <functional>

namespace enslens {

// Worker count used by every data-parallel kernel. Defaults to the hardware
// concurrency, overridden by ENSEMBLE_THREADS when set. Results never depend
// on this value.
std::size_t thread_count();
void set_thread_count(std::size_t n);

// Splits [0, n) into contiguous chunks whose boundaries are multiples of
// `align` and runs body(begin, end) for each chunk, one chunk per worker.
void parallel_for(std::size_t n, std::size_t align,
                  const std::function<void(std::size_t, std::size_t)>& body);

// Runs body(i) for every i in [0, n), distributing indices over workers.
void parallel_each(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace enslens
