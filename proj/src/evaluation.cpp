#include "tlal/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace tlal::eval {

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    fail(ErrorCode::domain, "auc: scores and labels length mismatch");
  std::size_t n_pos = 0, n_neg = 0;
  for (int l : labels) {
    if (l == 1)
      ++n_pos;
    else if (l == 0)
      ++n_neg;
    else
      fail(ErrorCode::domain, "auc: labels must be 0 or 1");
  }
  if (n_pos == 0 || n_neg == 0)
    fail(ErrorCode::domain, "auc undefined: only one class present");

  // Rank-sum form: sort by score, assign mid-ranks to ties, AUC from the
  // positive rank sum. O(n log n).
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    double mid = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based mid-rank
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k] == 1) pos_rank_sum += rank[k];
  double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

AggregateResult aggregate_values(const std::vector<double>& values) {
  if (values.size() < 2)
    fail(ErrorCode::statistics, "aggregate_runs requires at least 2 runs, got " +
                                    std::to_string(values.size()));
  double n = static_cast<double>(values.size());
  double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / (n - 1.0));
  double half = 1.96 * sd / std::sqrt(n);
  AggregateResult agg;
  agg.n_runs = values.size();
  agg.mean_auc = mean;
  agg.ci_low = mean - half;
  agg.ci_high = mean + half;
  return agg;
}

AggregateResult aggregate_runs(const std::vector<RunResult>& results, bool use_test_auc) {
  std::vector<double> vals;
  vals.reserve(results.size());
  for (const auto& r : results) vals.push_back(use_test_auc ? r.test_auc : r.val_auc);
  AggregateResult agg = aggregate_values(vals);
  if (!results.empty()) {
    agg.strategy = results.front().strategy;
    agg.sample_fraction = results.front().sample_fraction;
  }
  return agg;
}

Comparison compare_strategies(const AggregateResult& a, const AggregateResult& b) {
  // Split identity is enforced by the orchestrator, which only compares
  // aggregates produced from the same experiment manifest.
  Comparison c;
  c.mean_difference = a.mean_auc - b.mean_auc;
  c.ci_overlap = !(a.ci_low > b.ci_high || b.ci_low > a.ci_high);
  return c;
}

std::vector<AggregateResult> sweep_sample_size(const std::vector<double>& fractions,
                                               const std::vector<std::string>& strategies,
                                               std::size_t n_runs,
                                               std::uint64_t master_seed,
                                               const RunFn& run) {
  if (n_runs < 2) fail(ErrorCode::statistics, "sweep requires n_runs >= 2");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 0.8 + 1e-12))
      fail(ErrorCode::configuration,
           "sweep fraction " + std::to_string(f) + " outside (0, 0.8]");
  std::vector<AggregateResult> out;
  for (const auto& strat : strategies) {
    for (double f : fractions) {
      std::vector<RunResult> runs;
      for (std::size_t r = 0; r < n_runs; ++r) {
        std::uint64_t seed =
            derive_seed(master_seed, "sweep:" + strat + ":" + std::to_string(f), r);
        runs.push_back(run(strat, f, seed));
      }
      AggregateResult agg = aggregate_runs(runs);
      agg.strategy = strat;
      agg.sample_fraction = f;
      out.push_back(agg);
    }
  }
  return out;
}

void append_run_csv(const std::string& path, const RunResult& r, double wall_time_s) {
  bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) fail(ErrorCode::io, "cannot open results csv: " + path);
  if (fresh) out << "strategy,fraction,seed,val_auc,test_auc,wall_time\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%.6g,%llu,%.10g,%.10g,%.3f\n", r.strategy.c_str(),
                r.sample_fraction, static_cast<unsigned long long>(r.seed), r.val_auc,
                r.test_auc, wall_time_s);
  out << buf;
}

}  // namespace tlal::eval
