#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tlal {

// Error categories shared across the library and mirrored by the C API
// status codes.
enum class ErrorCode : int {
  ok = 0,
  configuration = 1,
  ingestion = 2,
  structural = 3,
  sampling = 4,
  stratification = 5,
  domain = 6,
  arity = 7,
  numerical = 8,
  consistency = 9,
  shape = 10,
  resource = 11,
  statistics = 12,
  io = 13,
  report = 14,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

// splitmix64; used to derive stage seeds from the master seed so adding
// runs never perturbs earlier ones.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_str(const std::string& s) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic seed for (master seed, stage name, run index).
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& stage,
                                 std::uint64_t run_index = 0) {
  return mix64(master ^ mix64(hash_str(stage)) ^ mix64(run_index * 0x9e3779b97f4a7c15ULL + 1));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Uniform [0,1) from raw 64-bit draws; keeps generation bit-reproducible
// across standard libraries (std::uniform_real_distribution is
// implementation-defined).
inline double unit_uniform(Rng& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * unit_uniform(rng);
}

inline double gaussian(Rng& rng, double mean = 0.0, double sigma = 1.0) {
  // Box-Muller
  double u1 = (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  double u2 = unit_uniform(rng);
  return mean + sigma * std::sqrt(-2.0 * std::log(u1)) *
                    std::cos(6.283185307179586 * u2);
}

// Uniform integer in [0, n) with rejection sampling; avoids the
// implementation-defined behavior of std::uniform_int_distribution so
// draws replay bit-exactly across standard libraries.
inline std::uint64_t rand_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// Draw k of n indices uniformly without replacement (partial Fisher-Yates),
// returned in draw order.
inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n,
                                                           std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rand_index(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

// round-half-up on a non-negative real; used for all fraction-of-pool counts.
inline std::size_t round_half_up(double x) {
  return static_cast<std::size_t>(x + 0.5);
}

}  // namespace tlal
