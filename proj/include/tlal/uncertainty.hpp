#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "tlal/common.hpp"

namespace tlal::uncertainty {

// Binary class distribution (p_class0, p_class1).
using Dist = std::array<double, 2>;

struct UncertaintyRecord {
  std::string sample_id;
  double entropy_sum = 0.0;
  double kl_sum = 0.0;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
};

struct UncertaintyRanking {
  // Sorted by score descending, ties broken by ascending sample_id.
  std::vector<UncertaintyRecord> records;
};

// H = -sum p_i log p_i, natural log, 0*log 0 := 0. Input must be a valid
// distribution (entries >= 0, sum 1 within 1e-9).
double entropy(const Dist& p);

// D(p||q) = sum p_i log(p_i / q_i); q entries clamped below by 1e-12.
double kl_divergence(const Dist& p, const Dist& q);

struct ScoreParts {
  double entropy_sum;
  double kl_sum;
  double score;
};

// Sum of the 3 member entropies plus symmetrized KL over the 3 unordered
// pairs (both directions each).
ScoreParts uncertainty_score(const std::vector<Dist>& member_probs);

// Stable descending sort with ascending-sample_id tie break; ranks 1..n.
UncertaintyRanking rank_pool(const std::map<std::string, ScoreParts>& scores);

// Convenience overload when only the combined score is available.
UncertaintyRanking rank_pool(const std::map<std::string, double>& scores);

void save_ranking(const UncertaintyRanking& ranking, const std::string& path);
UncertaintyRanking load_ranking(const std::string& path);

}  // namespace tlal::uncertainty
