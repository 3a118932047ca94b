#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "tlal/common.hpp"
#include "tlal/data.hpp"

namespace tlal::nn {

// Batch of flattened activations: rows = samples, cols = features.
using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Shape3 {
  std::size_t c = 0, h = 0, w = 0;
  std::size_t flat() const { return c * h * w; }
  bool operator==(const Shape3&) const = default;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Matrix forward(const Matrix& x, bool train, Rng* rng) = 0;
  virtual Matrix backward(const Matrix& dout) = 0;
  virtual Shape3 out_shape(const Shape3& in) const = 0;
  virtual std::string name() const = 0;
  // (parameter vector, gradient vector) pairs; empty for stateless layers.
  virtual std::vector<std::pair<std::vector<float>*, std::vector<float>*>> params() {
    return {};
  }
};

enum class Arch { alexnet, tiny };
std::string to_string(Arch a);
Arch arch_from_string(const std::string& s);

struct Hyperparams {
  double learning_rate = 0.001;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 30;  // 30 pretrained, 80 from scratch
  double momentum = 0.8;
  double l2_penalty = 1e-4;
  bool pretrained = true;
  std::uint64_t seed = 0;

  void validate() const;
};

class Model {
 public:
  Model(Arch arch, std::size_t input_size);

  Arch arch() const { return arch_; }
  Shape3 input_shape() const { return input_shape_; }

  // (layer name, output shape) for every layer, in order.
  std::vector<std::pair<std::string, Shape3>> activation_shapes() const;

  Matrix forward(const Matrix& x, bool train, Rng* rng);
  Matrix backward(const Matrix& dlogits);

  void init_weights(std::uint64_t seed);

  std::vector<float> snapshot_weights() const;
  void restore_weights(const std::vector<float>& flat);
  std::size_t n_params() const;
  double weight_l2_norm() const;

  std::vector<Layer*> layers();
  std::vector<std::pair<std::vector<float>*, std::vector<float>*>> all_params();

 private:
  Arch arch_;
  Shape3 input_shape_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auc = 0.0;
};

struct TrainedModel {
  std::shared_ptr<Model> model;
  double best_val_auc = 0.0;
  std::size_t best_epoch = 0;
  Hyperparams hyperparams;
  std::vector<EpochLog> log;
};

// Builds a network; pretrained=true loads the natural-image weights file
// for the architecture from weights_cache_dir (or $TLAL_WEIGHTS_CACHE).
// Missing weights with fetching forbidden is a resource error.
std::shared_ptr<Model> build_model(Arch arch, std::size_t input_size, bool pretrained,
                                   std::uint64_t seed,
                                   const std::string& weights_cache_dir = "",
                                   bool allow_fetch = false);

// SGD with momentum + L2, per-epoch validation AUC checkpointing; returns
// the snapshot with the highest validation AUC.
TrainedModel finetune(std::shared_ptr<Model> model, const data::SliceDataset& train,
                      const data::SliceDataset& val, const Hyperparams& hp);

// Softmax (p_class0, p_class1) per sample, evaluation mode.
std::vector<std::array<double, 2>> predict_probs(const TrainedModel& model,
                                                 const std::vector<data::SliceSample>& samples);

// HGG-probability scores for AUC computation.
std::vector<double> predict_scores(const TrainedModel& model,
                                   const std::vector<data::SliceSample>& samples);

// Checkpoint archive: JSON meta + training log + raw float32 weights.
void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

// Training-log export for the evaluation module (CSV).
void export_training_log(const TrainedModel& model, const std::string& path);

// Raw pretrained-weights file used by build_model(pretrained=true).
void save_weights_file(const Model& model, const std::string& path);

}  // namespace tlal::nn
