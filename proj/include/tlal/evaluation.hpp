#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tlal/common.hpp"

namespace tlal::eval {

struct RunResult {
  std::string strategy;
  double sample_fraction = 0.0;
  std::uint64_t seed = 0;
  double val_auc = 0.0;
  double test_auc = 0.0;
};

struct AggregateResult {
  std::string strategy;
  double sample_fraction = 0.0;
  std::size_t n_runs = 0;
  double mean_auc = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct Comparison {
  double mean_difference = 0.0;  // a - b, in AUC points
  bool ci_overlap = false;
};

// Probability that a random positive outranks a random negative, ties at 1/2
// (Mann-Whitney). Requires both classes present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Mean with normal-approximation 95% CI: mean +/- 1.96 * s / sqrt(n),
// s the sample standard deviation (n-1 denominator). Requires n >= 2.
AggregateResult aggregate_runs(const std::vector<RunResult>& results,
                               bool use_test_auc = true);
AggregateResult aggregate_values(const std::vector<double>& values);

Comparison compare_strategies(const AggregateResult& a, const AggregateResult& b);

// Runs one select->finetune->evaluate pass; supplied by the orchestrator.
using RunFn = std::function<RunResult(const std::string& strategy, double fraction,
                                      std::uint64_t seed)>;

// Full fraction x strategy sweep; n_runs repeats per cell, aggregated.
std::vector<AggregateResult> sweep_sample_size(const std::vector<double>& fractions,
                                               const std::vector<std::string>& strategies,
                                               std::size_t n_runs,
                                               std::uint64_t master_seed,
                                               const RunFn& run);

void append_run_csv(const std::string& path, const RunResult& r, double wall_time_s);

}  // namespace tlal::eval
