#include "tlal/committee.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace tlal::committee {

std::set<std::string> draw_initial_labeled_subset(const data::SliceDataset& pool,
                                                  double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    fail(ErrorCode::configuration,
         "initial labeled fraction must be in (0, 1], got " + std::to_string(fraction));
  const std::size_t n = pool.samples.size();
  const std::size_t want = round_half_up(fraction * static_cast<double>(n));
  Rng rng = make_rng(seed);
  std::set<std::string> ids;
  for (std::size_t pick : sample_without_replacement(rng, n, want))
    ids.insert(pool.samples[pick].sample_id);
  return ids;
}

Committee train_committee(const data::SliceDataset& pool,
                          const std::set<std::string>& labeled_ids,
                          const data::SliceDataset& val, const nn::Hyperparams& base_hp,
                          nn::Arch arch, std::size_t input_size,
                          const std::string& weights_cache_dir, bool allow_fetch) {
  if (labeled_ids.empty())
    fail(ErrorCode::configuration, "labeled subset is empty");

  data::SliceDataset labeled;
  labeled.variant = pool.variant;
  for (const auto& s : pool.samples)
    if (labeled_ids.count(s.sample_id)) labeled.samples.push_back(s);
  if (labeled.samples.size() != labeled_ids.size())
    fail(ErrorCode::consistency, "labeled subset contains ids outside the pool");

  bool has0 = false, has1 = false;
  for (const auto& s : labeled.samples) (s.label == 1 ? has1 : has0) = true;
  if (!has0 || !has1)
    fail(ErrorCode::stratification,
         "labeled subset contains a single class; committee training needs both");

  Committee committee;
  committee.labeled_subset_ids = labeled_ids;
  committee.seed = base_hp.seed;
  for (std::size_t m = 0; m < kLearningRates.size(); ++m) {
    nn::Hyperparams hp = base_hp;
    hp.learning_rate = kLearningRates[m];
    hp.seed = derive_seed(base_hp.seed, "committee-member", m);
    try {
      auto model = nn::build_model(arch, input_size, hp.pretrained, hp.seed,
                                   weights_cache_dir, allow_fetch);
      committee.members.push_back(nn::finetune(model, labeled, val, hp));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::numerical)
        fail(ErrorCode::numerical, "committee member with learning rate " +
                                       std::to_string(kLearningRates[m]) +
                                       " diverged: " + e.what());
      throw;
    }
  }
  return committee;
}

ProbabilityTensor score_pool(const Committee& committee, const data::SliceDataset& pool) {
  if (committee.members.size() != 3)
    fail(ErrorCode::consistency, "committee must have exactly 3 trained members");

  // Label-stripped copies: scoring is forward-only and never sees labels.
  std::vector<data::SliceSample> stripped = pool.samples;
  for (auto& s : stripped) s.label = -1;

  ProbabilityTensor tensor;
  tensor.sample_ids.reserve(pool.samples.size());
  for (const auto& s : pool.samples) tensor.sample_ids.push_back(s.sample_id);
  tensor.probs.resize(pool.samples.size());

  for (std::size_t m = 0; m < 3; ++m) {
    auto probs = nn::predict_probs(committee.members[m], stripped);
    for (std::size_t i = 0; i < probs.size(); ++i) tensor.probs[i][m] = probs[i];
  }
  return tensor;
}

void save_tensor(const ProbabilityTensor& tensor, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot open probability tensor for write: " + path);
  out << "sample_id,member_index,learning_rate,p0,p1\n";
  char buf[256];
  for (std::size_t i = 0; i < tensor.sample_ids.size(); ++i)
    for (std::size_t m = 0; m < 3; ++m) {
      std::snprintf(buf, sizeof(buf), "%s,%zu,%.6g,%.17g,%.17g\n",
                    tensor.sample_ids[i].c_str(), m, tensor.learning_rates[m],
                    tensor.probs[i][m][0], tensor.probs[i][m][1]);
      out << buf;
    }
}

ProbabilityTensor load_tensor(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open probability tensor: " + path);
  std::string line;
  std::getline(in, line);  // header
  ProbabilityTensor tensor;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, field;
    std::getline(ss, id, ',');
    std::getline(ss, field, ',');
    std::size_t m = std::stoul(field);
    std::getline(ss, field, ',');
    double lr = std::stod(field);
    std::getline(ss, field, ',');
    double p0 = std::stod(field);
    std::getline(ss, field, ',');
    double p1 = std::stod(field);
    if (m >= 3) fail(ErrorCode::structural, "member index out of range in tensor file");
    auto [it, fresh] = index.try_emplace(id, tensor.sample_ids.size());
    if (fresh) {
      tensor.sample_ids.push_back(id);
      tensor.probs.push_back({});
    }
    tensor.probs[it->second][m] = {p0, p1};
    tensor.learning_rates[m] = lr;
  }
  if (tensor.sample_ids.empty())
    fail(ErrorCode::io, "empty probability tensor file: " + path);
  return tensor;
}

}  // namespace tlal::committee
