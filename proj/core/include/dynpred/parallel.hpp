#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace dynpred {

// Process-wide worker count used by parallel_for. 0 means hardware concurrency.
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Runs body(i) for i in [0, n). Each index writes only to its own output slot,
// so results never depend on scheduling. Nested calls from inside a worker run
// serially on that worker.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// Hierarchical seed derivation: derive_seed(run, fold), derive_seed(fold_seed, method), ...
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t child);

}  // namespace dynpred
