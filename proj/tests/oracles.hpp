#pragma once

// Test-only oracles, independent of the library implementation paths.

#include <mpfr.h>

#include <cstddef>
#include <vector>

namespace oracle {

// 256-bit entropy of a binary distribution (p, 1-p).
inline double entropy_mp(double p) {
  mpfr_t a, b, t, acc;
  mpfr_inits2(256, a, b, t, acc, (mpfr_ptr)0);
  mpfr_set_zero(acc, 1);
  double ps[2] = {p, 1.0 - p};
  for (double x : ps) {
    if (x > 0.0) {
      mpfr_set_d(a, x, MPFR_RNDN);
      mpfr_log(t, a, MPFR_RNDN);
      mpfr_mul(t, t, a, MPFR_RNDN);
      mpfr_sub(acc, acc, t, MPFR_RNDN);
    }
  }
  double r = mpfr_get_d(acc, MPFR_RNDN);
  mpfr_clears(a, b, t, acc, (mpfr_ptr)0);
  return r;
}

// 256-bit D(p||q) for binary distributions, q clamped at 1e-12 to match the
// library's stated contract.
inline double kl_mp(double p, double q) {
  mpfr_t a, b, t, acc;
  mpfr_inits2(256, a, b, t, acc, (mpfr_ptr)0);
  mpfr_set_zero(acc, 1);
  double ps[2] = {p, 1.0 - p};
  double qs[2] = {q, 1.0 - q};
  for (int i = 0; i < 2; ++i) {
    if (ps[i] > 0.0) {
      double qq = qs[i] < 1e-12 ? 1e-12 : qs[i];
      mpfr_set_d(a, ps[i], MPFR_RNDN);
      mpfr_set_d(b, qq, MPFR_RNDN);
      mpfr_div(t, a, b, MPFR_RNDN);
      mpfr_log(t, t, MPFR_RNDN);
      mpfr_mul(t, t, a, MPFR_RNDN);
      mpfr_add(acc, acc, t, MPFR_RNDN);
    }
  }
  double r = mpfr_get_d(acc, MPFR_RNDN);
  mpfr_clears(a, b, t, acc, (mpfr_ptr)0);
  return r;
}

inline double score_mp(const double member_p1[3]) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += entropy_mp(member_p1[i]);
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      s += kl_mp(member_p1[i], member_p1[j]);
      s += kl_mp(member_p1[j], member_p1[i]);
    }
  return s;
}

// O(n^2) pairwise-count AUC with ties at 1/2.
inline double auc_bruteforce(const std::vector<double>& scores,
                             const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace oracle
