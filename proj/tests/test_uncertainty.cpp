#include <cmath>
#include <random>

#include "doctest.h"
#include "tlal/uncertainty.hpp"

#if TLAL_HAVE_MPFR
#include "oracles.hpp"
#endif

using namespace tlal;
using namespace tlal::uncertainty;

TEST_CASE("entropy boundary and frozen values") {
  CHECK(entropy({0.5, 0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(entropy({1.0, 0.0}) == doctest::Approx(0.0));
  CHECK(entropy({0.0, 1.0}) == doctest::Approx(0.0));
  // frozen from the arbitrary-precision oracle
  CHECK(entropy({0.9, 0.1}) == doctest::Approx(0.32508297339144824).epsilon(1e-12));
}

TEST_CASE("entropy rejects invalid distributions") {
  CHECK_THROWS_AS(entropy({0.5, 0.6}), Error);
  CHECK_THROWS_AS(entropy({-0.1, 1.1}), Error);
}

TEST_CASE("kl divergence identities and frozen values") {
  CHECK(kl_divergence({0.3, 0.7}, {0.3, 0.7}) == doctest::Approx(0.0));
  // frozen from the arbitrary-precision oracle
  CHECK(kl_divergence({0.9, 0.1}, {0.5, 0.5}) ==
        doctest::Approx(0.36806420716849707).epsilon(1e-12));
}

TEST_CASE("kl divergence non-negative and finite at boundaries") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    double p = std::uniform_real_distribution<>(0.0, 1.0)(rng);
    double q = std::uniform_real_distribution<>(0.0, 1.0)(rng);
    double d = kl_divergence({p, 1 - p}, {q, 1 - q});
    CHECK(d >= -1e-15);
    CHECK(std::isfinite(d));
  }
  // exact zeros/ones go through the epsilon clamp
  CHECK(std::isfinite(kl_divergence({1.0, 0.0}, {0.0, 1.0})));
  CHECK(std::isfinite(kl_divergence({0.0, 1.0}, {1.0, 0.0})));
}

TEST_CASE("uncertainty_score: identical members reduce to 3H") {
  Dist p{0.3, 0.7};
  auto sp = uncertainty_score({p, p, p});
  CHECK(sp.kl_sum == doctest::Approx(0.0));
  CHECK(sp.entropy_sum == doctest::Approx(3.0 * entropy(p)).epsilon(1e-12));
  CHECK(sp.score == sp.entropy_sum + sp.kl_sum);
}

TEST_CASE("uncertainty_score: degenerate agreement is the global minimum") {
  auto sp = uncertainty_score({{{1.0, 0.0}}, {{1.0, 0.0}}, {{1.0, 0.0}}});
  CHECK(sp.score == doctest::Approx(0.0));
}

TEST_CASE("uncertainty_score: frozen oracle constant") {
  // Members (0.9,0.1), (0.5,0.5), (0.1,0.9); values frozen from the
  // arbitrary-precision oracle before the build.
  auto sp = uncertainty_score({{{0.9, 0.1}}, {{0.5, 0.5}}, {{0.1, 0.9}}});
  CHECK(sp.entropy_sum == doctest::Approx(1.3433131273428418).epsilon(1e-12));
  CHECK(sp.kl_sum == doctest::Approx(5.2733389856069265).epsilon(1e-12));
  CHECK(sp.score == doctest::Approx(6.6166521129497683).epsilon(1e-12));
}

TEST_CASE("uncertainty_score: permutation invariance") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    std::array<Dist, 3> m;
    for (auto& d : m) {
      double p = std::uniform_real_distribution<>(0.0, 1.0)(rng);
      d = {p, 1 - p};
    }
    auto a = uncertainty_score({m[0], m[1], m[2]});
    auto b = uncertainty_score({m[2], m[0], m[1]});
    auto c = uncertainty_score({m[1], m[2], m[0]});
    CHECK(a.score == doctest::Approx(b.score).epsilon(1e-12));
    CHECK(a.score == doctest::Approx(c.score).epsilon(1e-12));
    CHECK(a.score >= -1e-15);
  }
}

TEST_CASE("uncertainty_score: arity error") {
  CHECK_THROWS_AS(uncertainty_score({{{0.5, 0.5}}, {{0.5, 0.5}}}), Error);
}

#if TLAL_HAVE_MPFR
TEST_CASE("entropy and kl match the arbitrary-precision oracle") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 1000; ++i) {
    double p = std::uniform_real_distribution<>(1e-8, 1.0 - 1e-8)(rng);
    double q = std::uniform_real_distribution<>(1e-8, 1.0 - 1e-8)(rng);
    CHECK(entropy({p, 1 - p}) ==
          doctest::Approx(oracle::entropy_mp(p)).epsilon(0).scale(1).epsilon(1e-9));
    CHECK(kl_divergence({p, 1 - p}, {q, 1 - q}) ==
          doctest::Approx(oracle::kl_mp(p, q)).epsilon(1e-9));
  }
}
#endif

TEST_CASE("rank_pool ordering, tie break, ranks") {
  std::map<std::string, double> scores{{"a", 0.5}, {"b", 0.9}, {"c", 0.1}};
  auto r = rank_pool(scores);
  REQUIRE(r.records.size() == 3);
  CHECK(r.records[0].sample_id == "b");
  CHECK(r.records[1].sample_id == "a");
  CHECK(r.records[2].sample_id == "c");
  CHECK(r.records[0].rank == 1);
  CHECK(r.records[2].rank == 3);

  auto t = rank_pool(std::map<std::string, double>{{"a", 0.5}, {"b", 0.5}});
  CHECK(t.records[0].sample_id == "a");
  CHECK(t.records[1].sample_id == "b");
}

TEST_CASE("rank_pool agrees with a reference sort on 1000 random scores") {
  std::mt19937_64 rng(3);
  std::map<std::string, double> scores;
  std::vector<std::pair<double, std::string>> ref;
  for (int i = 0; i < 1000; ++i) {
    std::string id = "s" + std::to_string(10000 + i);
    double v = std::uniform_real_distribution<>(0.0, 10.0)(rng);
    scores[id] = v;
    ref.emplace_back(-v, id);
  }
  std::sort(ref.begin(), ref.end());
  auto r = rank_pool(scores);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(r.records[i].sample_id == ref[i].second);
  // idempotence: ranking the ranking's scores reproduces the order
  std::map<std::string, double> again;
  for (const auto& rec : r.records) again[rec.sample_id] = rec.score;
  auto r2 = rank_pool(again);
  for (std::size_t i = 0; i < r.records.size(); ++i)
    CHECK(r2.records[i].sample_id == r.records[i].sample_id);
}

TEST_CASE("rank_pool rejects NaN and empty input") {
  CHECK_THROWS_AS(rank_pool(std::map<std::string, double>{}), Error);
  CHECK_THROWS_AS(rank_pool(std::map<std::string, double>{{"a", std::nan("")}}), Error);
}

TEST_CASE("ranking file round trip") {
  std::map<std::string, ScoreParts> scores;
  scores["x1"] = {0.5, 1.0, 1.5};
  scores["x2"] = {0.2, 0.1, 0.3};
  auto r = rank_pool(scores);
  std::string path = "test_ranking.tsv";
  save_ranking(r, path);
  auto r2 = load_ranking(path);
  REQUIRE(r2.records.size() == r.records.size());
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    CHECK(r2.records[i].sample_id == r.records[i].sample_id);
    CHECK(r2.records[i].score == r.records[i].score);
  }
  std::remove(path.c_str());
}
