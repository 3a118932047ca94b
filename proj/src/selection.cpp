#include "tlal/selection.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace tlal::selection {

using nlohmann::json;

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::proposed: return "proposed";
    case Strategy::range: return "range";
    case Strategy::random: return "random";
  }
  return "unknown";
}

namespace {

Strategy strategy_from_string(const std::string& s) {
  if (s == "proposed") return Strategy::proposed;
  if (s == "range") return Strategy::range;
  if (s == "random") return Strategy::random;
  fail(ErrorCode::configuration, "unknown selection strategy: " + s);
}

// Rank boundary for pct% of n, round-half-up. Windows are half-open on
// rank: (lo, hi] so adjacent windows partition exactly.
std::size_t pct_boundary(double pct, std::size_t n) {
  return round_half_up(pct * static_cast<double>(n) / 100.0);
}

}  // namespace

SelectionResult select_range(const uncertainty::UncertaintyRanking& ranking,
                             double lo_pct, double hi_pct) {
  if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0))
    fail(ErrorCode::configuration,
         "select_range: invalid window (" + std::to_string(lo_pct) + ", " +
             std::to_string(hi_pct) + ")");
  const std::size_t n = ranking.records.size();
  const std::size_t lo = pct_boundary(lo_pct, n);
  const std::size_t hi = pct_boundary(hi_pct, n);
  SelectionResult r;
  r.strategy = Strategy::range;
  r.parameters["lo_pct"] = lo_pct;
  r.parameters["hi_pct"] = hi_pct;
  for (std::size_t i = lo; i < hi; ++i)
    r.selected_ids.insert(ranking.records[i].sample_id);
  return r;
}

SelectionResult select_proposed(const uncertainty::UncertaintyRanking& ranking,
                                double discard_pct, double sample_fraction,
                                std::uint64_t seed) {
  const std::size_t n = ranking.records.size();
  if (!(discard_pct >= 0.0 && discard_pct < 50.0))
    fail(ErrorCode::configuration, "select_proposed: discard_pct must be in [0, 50)");
  const double max_feasible = (100.0 - 2.0 * discard_pct) / 100.0;
  if (sample_fraction > max_feasible + 1e-12)
    fail(ErrorCode::configuration,
         "select_proposed: sample_fraction " + std::to_string(sample_fraction) +
             " infeasible with discard " + std::to_string(discard_pct) +
             "%; maximum feasible fraction is " + std::to_string(max_feasible));
  if (!(sample_fraction > 0.0))
    fail(ErrorCode::configuration, "select_proposed: sample_fraction must be positive");

  const std::size_t top_cut = pct_boundary(discard_pct, n);
  const std::size_t bottom_cut = pct_boundary(100.0 - discard_pct, n);
  const std::size_t want = round_half_up(sample_fraction * static_cast<double>(n));
  const std::size_t middle = bottom_cut - top_cut;
  if (want > middle)
    fail(ErrorCode::configuration,
         "select_proposed: middle window holds " + std::to_string(middle) +
             " samples, fewer than requested " + std::to_string(want));

  SelectionResult r;
  r.strategy = Strategy::proposed;
  r.parameters["discard_pct"] = discard_pct;
  r.parameters["sample_fraction"] = sample_fraction;
  r.parameters["seed"] = static_cast<double>(seed);
  Rng rng = make_rng(seed);
  for (std::size_t pick : sample_without_replacement(rng, middle, want))
    r.selected_ids.insert(ranking.records[top_cut + pick].sample_id);
  return r;
}

SelectionResult select_random(const std::vector<std::string>& pool_ids,
                              double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    fail(ErrorCode::configuration,
         "select_random: fraction must be in (0, 1], got " + std::to_string(fraction));
  const std::size_t n = pool_ids.size();
  const std::size_t want = round_half_up(fraction * static_cast<double>(n));
  SelectionResult r;
  r.strategy = Strategy::random;
  r.parameters["fraction"] = fraction;
  r.parameters["seed"] = static_cast<double>(seed);
  Rng rng = make_rng(seed);
  for (std::size_t pick : sample_without_replacement(rng, n, want))
    r.selected_ids.insert(pool_ids[pick]);
  return r;
}

LabelingCost labeling_cost(const std::set<std::string>& initial_labeled,
                           const std::set<std::string>& selected,
                           std::size_t pool_size) {
  LabelingCost c;
  std::size_t union_count = initial_labeled.size();
  for (const auto& id : selected) {
    if (!initial_labeled.count(id)) {
      ++c.newly_labeled;
      ++union_count;
    }
  }
  if (union_count > pool_size)
    fail(ErrorCode::consistency, "labeling_cost: ids outside the pool");
  c.total_fraction = static_cast<double>(union_count) / static_cast<double>(pool_size);
  return c;
}

void save_selection(const SelectionResult& r, const std::string& path) {
  json j;
  j["strategy"] = to_string(r.strategy);
  j["parameters"] = r.parameters;
  j["selected_ids"] = std::vector<std::string>(r.selected_ids.begin(), r.selected_ids.end());
  j["newly_labeled_count"] = r.newly_labeled_count;
  j["total_label_fraction"] = r.total_label_fraction;
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot open selection file for write: " + path);
  out << j.dump(2) << "\n";
}

SelectionResult load_selection(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open selection file: " + path);
  json j;
  in >> j;
  SelectionResult r;
  r.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  r.parameters = j.at("parameters").get<std::map<std::string, double>>();
  for (const auto& id : j.at("selected_ids")) r.selected_ids.insert(id.get<std::string>());
  r.newly_labeled_count = j.at("newly_labeled_count").get<std::size_t>();
  r.total_label_fraction = j.at("total_label_fraction").get<double>();
  return r;
}

}  // namespace tlal::selection
