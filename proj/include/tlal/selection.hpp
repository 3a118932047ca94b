#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "tlal/common.hpp"
#include "tlal/uncertainty.hpp"

namespace tlal::selection {

enum class Strategy { proposed, range, random };

std::string to_string(Strategy s);

struct SelectionResult {
  Strategy strategy = Strategy::random;
  std::set<std::string> selected_ids;
  std::map<std::string, double> parameters;  // window bounds, fractions, seed
  std::size_t newly_labeled_count = 0;
  double total_label_fraction = 0.0;
};

// Contiguous ranked window: ranks round(lo*n/100)+1 .. round(hi*n/100).
// (0,30) = top-30% most uncertain; (70,100) = most certain.
SelectionResult select_range(const uncertainty::UncertaintyRanking& ranking,
                             double lo_pct, double hi_pct);

// Discard top/bottom discard_pct% of the ranking, then draw round(
// sample_fraction * n) samples (fraction of the FULL pool) uniformly
// without replacement from the middle. Deterministic given seed.
SelectionResult select_proposed(const uncertainty::UncertaintyRanking& ranking,
                                double discard_pct, double sample_fraction,
                                std::uint64_t seed);

SelectionResult select_random(const std::vector<std::string>& pool_ids,
                              double fraction, std::uint64_t seed);

struct LabelingCost {
  std::size_t newly_labeled = 0;
  double total_fraction = 0.0;
};

// newly_labeled = |selected \ initial|; total_fraction = |initial u selected| / pool.
LabelingCost labeling_cost(const std::set<std::string>& initial_labeled,
                           const std::set<std::string>& selected,
                           std::size_t pool_size);

void save_selection(const SelectionResult& r, const std::string& path);
SelectionResult load_selection(const std::string& path);

}  // namespace tlal::selection
