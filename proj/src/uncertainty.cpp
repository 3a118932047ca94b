#include "tlal/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tlal::uncertainty {

namespace {

constexpr double kQClamp = 1e-12;

void check_dist(const Dist& p) {
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) fail(ErrorCode::domain, "distribution entry negative or NaN");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    fail(ErrorCode::domain, "distribution does not sum to 1 (sum=" + std::to_string(sum) + ")");
}

}  // namespace

double entropy(const Dist& p) {
  check_dist(p);
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

double kl_divergence(const Dist& p, const Dist& q) {
  check_dist(p);
  check_dist(q);
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) d += p[i] * std::log(p[i] / std::max(q[i], kQClamp));
  }
  return d;
}

ScoreParts uncertainty_score(const std::vector<Dist>& member_probs) {
  if (member_probs.size() != 3)
    fail(ErrorCode::arity, "uncertainty_score expects exactly 3 member distributions, got " +
                               std::to_string(member_probs.size()));
  ScoreParts out{0.0, 0.0, 0.0};
  for (const auto& p : member_probs) out.entropy_sum += entropy(p);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) {
      out.kl_sum += kl_divergence(member_probs[i], member_probs[j]);
      out.kl_sum += kl_divergence(member_probs[j], member_probs[i]);
    }
  out.score = out.entropy_sum + out.kl_sum;
  return out;
}

namespace {

UncertaintyRanking rank_records(std::vector<UncertaintyRecord> recs) {
  if (recs.empty()) fail(ErrorCode::domain, "rank_pool: empty score map");
  for (const auto& r : recs)
    if (!std::isfinite(r.score))
      fail(ErrorCode::numerical, "non-finite uncertainty score for sample " + r.sample_id);
  std::stable_sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.sample_id < b.sample_id;
  });
  for (std::size_t i = 0; i < recs.size(); ++i) recs[i].rank = i + 1;
  return UncertaintyRanking{std::move(recs)};
}

}  // namespace

UncertaintyRanking rank_pool(const std::map<std::string, ScoreParts>& scores) {
  std::vector<UncertaintyRecord> recs;
  recs.reserve(scores.size());
  for (const auto& [id, sp] : scores)
    recs.push_back({id, sp.entropy_sum, sp.kl_sum, sp.score, 0});
  return rank_records(std::move(recs));
}

UncertaintyRanking rank_pool(const std::map<std::string, double>& scores) {
  std::vector<UncertaintyRecord> recs;
  recs.reserve(scores.size());
  for (const auto& [id, s] : scores) recs.push_back({id, 0.0, 0.0, s, 0});
  return rank_records(std::move(recs));
}

void save_ranking(const UncertaintyRanking& ranking, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot open ranking file for write: " + path);
  out << "rank\tsample_id\tentropy_sum\tkl_sum\tscore\n";
  char buf[256];
  for (const auto& r : ranking.records) {
    std::snprintf(buf, sizeof(buf), "%zu\t%s\t%.17g\t%.17g\t%.17g\n", r.rank,
                  r.sample_id.c_str(), r.entropy_sum, r.kl_sum, r.score);
    out << buf;
  }
}

UncertaintyRanking load_ranking(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open ranking file: " + path);
  std::string line;
  std::getline(in, line);  // header
  UncertaintyRanking ranking;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    UncertaintyRecord r;
    ss >> r.rank >> r.sample_id >> r.entropy_sum >> r.kl_sum >> r.score;
    if (!ss) fail(ErrorCode::io, "malformed ranking line: " + line);
    ranking.records.push_back(std::move(r));
  }
  if (ranking.records.empty()) fail(ErrorCode::io, "empty ranking file: " + path);
  return ranking;
}

}  // namespace tlal::uncertainty
