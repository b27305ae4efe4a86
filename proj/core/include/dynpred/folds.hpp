#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dynpred {

// Fold labels in [0, k): events and non-events are shuffled separately and
// dealt round-robin with one running counter, so every fold gets
// floor(E/k) or ceil(E/k) events.
std::vector<int> event_stratified_folds(std::span<const int> events, int k, std::uint64_t seed);

}  // namespace dynpred
