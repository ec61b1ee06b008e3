#pragma once

#include <cstddef>
#include <functional>

namespace sidalign {

/// Global worker cap. 0 restores the default (hardware concurrency).
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Runs fn(i) for i in [begin, end) across up to num_threads() workers using a
/// static contiguous partition. fn must only write to per-index state.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn);

}  // namespace sidalign
