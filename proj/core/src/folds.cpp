#include "dynpred/folds.hpp"

#include <algorithm>
#include <random>

#include "dynpred/error.hpp"

namespace dynpred {

std::vector<int> event_stratified_folds(std::span<const int> events, int k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("fold count must be at least 1");
  if (static_cast<std::size_t>(k) > events.size())
    throw ConfigError("fold count " + std::to_string(k) + " exceeds the number of subjects (" +
                      std::to_string(events.size()) + ")");
  std::vector<std::size_t> ev, ce;
  for (std::size_t i = 0; i < events.size(); ++i) (events[i] ? ev : ce).push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(ev.begin(), ev.end(), rng);
  std::shuffle(ce.begin(), ce.end(), rng);
  std::vector<int> fold(events.size());
  std::size_t c = 0;
  for (auto i : ev) fold[i] = static_cast<int>(c++ % static_cast<std::size_t>(k));
  for (auto i : ce) fold[i] = static_cast<int>(c++ % static_cast<std::size_t>(k));
  return fold;
}

}  // namespace dynpred
