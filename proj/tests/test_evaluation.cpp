#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "tlal/evaluation.hpp"

using namespace tlal;
using namespace tlal::eval;

TEST_CASE("auc basic cases") {
  // 3 of 4 positive/negative pairs correctly ordered
  CHECK(auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == doctest::Approx(1.0));
  CHECK(auc({0.5, 0.5, 0.5, 0.5}, {0, 0, 1, 1}) == doctest::Approx(0.5));
}

TEST_CASE("auc errors") {
  CHECK_THROWS_AS(auc({0.1, 0.2}, {1, 1}), Error);
  CHECK_THROWS_AS(auc({0.1, 0.2}, {0, 0}), Error);
  CHECK_THROWS_AS(auc({0.1}, {0, 1}), Error);
}

TEST_CASE("auc matches the brute-force pairwise oracle with ties") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 200; ++rep) {
    std::size_t n = 2 + rng() % 198;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool both = false;
    // coarse grid so ties actually occur
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng() % 20) / 20.0;
      labels[i] = static_cast<int>(rng() % 2);
    }
    labels[0] = 0;
    labels[n - 1] = 1;
    both = true;
    REQUIRE(both);
    CHECK(auc(scores, labels) ==
          doctest::Approx(oracle::auc_bruteforce(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("auc invariances") {
  std::mt19937_64 rng(5);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) {
    scores.push_back(std::uniform_real_distribution<>(0.0, 1.0)(rng));
    labels.push_back(static_cast<int>(rng() % 2));
  }
  labels[0] = 0;
  labels[1] = 1;
  double base = auc(scores, labels);

  // strictly monotonic transform
  std::vector<double> transformed;
  for (double s : scores) transformed.push_back(std::exp(3.0 * s) + 1.0);
  CHECK(auc(transformed, labels) == doctest::Approx(base).epsilon(1e-12));

  // complement symmetry (no ties almost surely)
  std::vector<double> negated;
  for (double s : scores) negated.push_back(-s);
  CHECK(auc(negated, labels) == doctest::Approx(1.0 - base).epsilon(1e-12));
}

TEST_CASE("aggregate_runs CI formula") {
  auto agg = aggregate_values({0.7, 0.8});
  CHECK(agg.mean_auc == doctest::Approx(0.75));
  double s = std::sqrt((0.05 * 0.05 + 0.05 * 0.05) / 1.0);
  double half = 1.96 * s / std::sqrt(2.0);
  CHECK(agg.ci_high - agg.mean_auc == doctest::Approx(half).epsilon(1e-9));
  CHECK(agg.mean_auc - agg.ci_low == doctest::Approx(half).epsilon(1e-9));

  auto zero = aggregate_values({0.6, 0.6, 0.6});
  CHECK(zero.ci_low == doctest::Approx(0.6));
  CHECK(zero.ci_high == doctest::Approx(0.6));

  CHECK_THROWS_AS(aggregate_values({0.5}), Error);
}

TEST_CASE("aggregate_runs is permutation invariant and symmetric") {
  std::mt19937_64 rng(17);
  std::vector<double> vals;
  for (int i = 0; i < 10; ++i) vals.push_back(std::uniform_real_distribution<>(0.5, 1.0)(rng));
  auto a = aggregate_values(vals);
  std::reverse(vals.begin(), vals.end());
  auto b = aggregate_values(vals);
  CHECK(a.mean_auc == doctest::Approx(b.mean_auc).epsilon(1e-12));
  CHECK(a.ci_low == doctest::Approx(b.ci_low).epsilon(1e-12));
  CHECK(a.mean_auc - a.ci_low == doctest::Approx(a.ci_high - a.mean_auc).epsilon(1e-12));
}

TEST_CASE("compare_strategies") {
  AggregateResult a{"proposed", 0.3, 10, 82.89, 81.87, 83.91};
  AggregateResult b{"baseline", 1.0, 10, 79.91, 78.95, 80.87};
  auto c = compare_strategies(a, b);
  CHECK(c.mean_difference == doctest::Approx(2.98).epsilon(1e-9));

  auto self = compare_strategies(a, a);
  CHECK(self.mean_difference == doctest::Approx(0.0));
  CHECK(self.ci_overlap);

  AggregateResult lo{"x", 0.1, 2, 1.5, 1.0, 2.0};
  AggregateResult hi{"y", 0.1, 2, 3.5, 3.0, 4.0};
  CHECK_FALSE(compare_strategies(lo, hi).ci_overlap);
}

TEST_CASE("sweep_sample_size runs the grid and validates fractions") {
  std::vector<double> fractions{0.1, 0.2};
  int calls = 0;
  auto run = [&](const std::string& strat, double f, std::uint64_t seed) {
    ++calls;
    RunResult r;
    r.strategy = strat;
    r.sample_fraction = f;
    r.seed = seed;
    r.val_auc = 0.7 + 0.1 * f + (seed % 7) * 1e-4;
    r.test_auc = r.val_auc - 0.01;
    return r;
  };
  auto aggs = sweep_sample_size(fractions, {"uncertainty", "random"}, 3, 123, run);
  CHECK(calls == 12);
  REQUIRE(aggs.size() == 4);
  for (const auto& a : aggs) CHECK(a.n_runs == 3);

  CHECK_THROWS_AS(sweep_sample_size({0.9}, {"uncertainty"}, 3, 1, run), Error);
  CHECK_THROWS_AS(sweep_sample_size({0.1}, {"uncertainty"}, 1, 1, run), Error);
}
