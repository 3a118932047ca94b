#pragma once

#include <array>
#include <set>
#include <string>
#include <vector>

#include "tlal/common.hpp"
#include "tlal/data.hpp"
#include "tlal/nn.hpp"

namespace tlal::committee {

inline constexpr std::array<double, 3> kLearningRates = {0.001, 0.0005, 0.0001};

struct Committee {
  std::vector<nn::TrainedModel> members;  // exactly 3, one per learning rate
  std::set<std::string> labeled_subset_ids;
  std::uint64_t seed = 0;
};

struct ProbabilityTensor {
  std::vector<std::string> sample_ids;
  // probs[sample][member] = (p_class0, p_class1)
  std::vector<std::array<std::array<double, 2>, 3>> probs;
  std::array<double, 3> learning_rates = kLearningRates;
};

// Uniform subset of size round(fraction * |pool|), deterministic given seed.
std::set<std::string> draw_initial_labeled_subset(const data::SliceDataset& pool,
                                                  double fraction, std::uint64_t seed);

// Three pretrained backbones finetuned on the labeled subset; identical
// hyperparameters except learning rate in {0.001, 0.0005, 0.0001}. Member
// seeds derive deterministically from base_hp.seed.
Committee train_committee(const data::SliceDataset& pool,
                          const std::set<std::string>& labeled_ids,
                          const data::SliceDataset& val, const nn::Hyperparams& base_hp,
                          nn::Arch arch, std::size_t input_size,
                          const std::string& weights_cache_dir = "",
                          bool allow_fetch = false);

// Forward-only probabilities for every pool sample from every member.
// Never reads labels.
ProbabilityTensor score_pool(const Committee& committee, const data::SliceDataset& pool);

// Columnar persistence: sample_id, member_index, learning_rate, p0, p1.
void save_tensor(const ProbabilityTensor& tensor, const std::string& path);
ProbabilityTensor load_tensor(const std::string& path);

}  // namespace tlal::committee
