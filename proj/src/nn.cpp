#include "tlal/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"
#include "tlal/evaluation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tlal::nn {

std::string to_string(Arch a) { return a == Arch::alexnet ? "alexnet" : "tiny"; }

Arch arch_from_string(const std::string& s) {
  if (s == "alexnet") return Arch::alexnet;
  if (s == "tiny") return Arch::tiny;
  fail(ErrorCode::configuration, "unknown architecture: " + s);
}

void Hyperparams::validate() const {
  if (!(learning_rate > 0.0))
    fail(ErrorCode::configuration, "learning_rate must be positive");
  if (batch_size < 1) fail(ErrorCode::configuration, "batch_size must be >= 1");
  if (max_epochs < 1) fail(ErrorCode::configuration, "max_epochs must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0))
    fail(ErrorCode::configuration, "momentum must be in [0, 1)");
  if (l2_penalty < 0.0) fail(ErrorCode::configuration, "l2_penalty must be >= 0");
}

// ---- layers ----

namespace {

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

class Conv2d final : public Layer {
 public:
  Conv2d(std::string name, Shape3 in, std::size_t out_c, std::size_t k, std::size_t stride,
         std::size_t pad)
      : name_(std::move(name)), in_(in), out_c_(out_c), k_(k), stride_(stride), pad_(pad) {
    out_ = {out_c, conv_out(in.h, k, stride, pad), conv_out(in.w, k, stride, pad)};
    weights_.resize(out_c_ * in_.c * k_ * k_);
    bias_.resize(out_c_);
    dweights_.resize(weights_.size());
    dbias_.resize(bias_.size());
  }

  std::string name() const override { return name_; }
  Shape3 out_shape(const Shape3&) const override { return out_; }

  std::vector<std::pair<std::vector<float>*, std::vector<float>*>> params() override {
    return {{&weights_, &dweights_}, {&bias_, &dbias_}};
  }

  Matrix forward(const Matrix& x, bool, Rng*) override {
    const std::size_t batch = x.rows();
    const std::size_t cols = out_.h * out_.w;
    const std::size_t patch = in_.c * k_ * k_;
    Matrix out(batch, out_.flat());
    cols_.assign(batch, Matrix());
    Eigen::Map<const Matrix> W(weights_.data(), out_c_, patch);
    for (std::size_t b = 0; b < batch; ++b) {
      Matrix col = im2col(x.row(b).data());
      Matrix o = W * col;  // out_c x (oh*ow)
      for (std::size_t c = 0; c < out_c_; ++c) o.row(c).array() += bias_[c];
      std::memcpy(out.row(b).data(), o.data(), sizeof(float) * out_c_ * cols);
      cols_[b] = std::move(col);
    }
    return out;
  }

  Matrix backward(const Matrix& dout) override {
    const std::size_t batch = dout.rows();
    const std::size_t cols = out_.h * out_.w;
    const std::size_t patch = in_.c * k_ * k_;
    Eigen::Map<const Matrix> W(weights_.data(), out_c_, patch);
    Eigen::Map<Matrix> dW(dweights_.data(), out_c_, patch);
    Matrix dx(batch, in_.flat());
    for (std::size_t b = 0; b < batch; ++b) {
      Eigen::Map<const Matrix> dO(dout.row(b).data(), out_c_, cols);
      dW.noalias() += dO * cols_[b].transpose();
      for (std::size_t c = 0; c < out_c_; ++c) dbias_[c] += dO.row(c).sum();
      Matrix dcol = W.transpose() * dO;  // patch x cols
      col2im(dcol, dx.row(b).data());
    }
    cols_.clear();
    return dx;
  }

 private:
  Matrix im2col(const float* src) const {
    const std::size_t cols = out_.h * out_.w;
    Matrix col(in_.c * k_ * k_, cols);
    col.setZero();
    for (std::size_t c = 0; c < in_.c; ++c) {
      for (std::size_t ky = 0; ky < k_; ++ky) {
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const std::size_t prow = (c * k_ + ky) * k_ + kx;
          for (std::size_t oy = 0; oy < out_.h; ++oy) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_.h)) continue;
            for (std::size_t ox = 0; ox < out_.w; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) -
                                        static_cast<std::ptrdiff_t>(pad_);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_.w)) continue;
              col(prow, oy * out_.w + ox) = src[(c * in_.h + iy) * in_.w + ix];
            }
          }
        }
      }
    }
    return col;
  }

  void col2im(const Matrix& dcol, float* d) const {
    std::fill(d, d + in_.flat(), 0.0f);
    for (std::size_t c = 0; c < in_.c; ++c) {
      for (std::size_t ky = 0; ky < k_; ++ky) {
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const std::size_t prow = (c * k_ + ky) * k_ + kx;
          for (std::size_t oy = 0; oy < out_.h; ++oy) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_.h)) continue;
            for (std::size_t ox = 0; ox < out_.w; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) -
                                        static_cast<std::ptrdiff_t>(pad_);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_.w)) continue;
              d[(c * in_.h + iy) * in_.w + ix] += dcol(prow, oy * out_.w + ox);
            }
          }
        }
      }
    }
  }

  std::string name_;
  Shape3 in_, out_;
  std::size_t out_c_, k_, stride_, pad_;
  std::vector<float> weights_, bias_, dweights_, dbias_;
  std::vector<Matrix> cols_;
};

class MaxPool final : public Layer {
 public:
  MaxPool(std::string name, Shape3 in, std::size_t k, std::size_t stride)
      : name_(std::move(name)), in_(in), k_(k), stride_(stride) {
    out_ = {in.c, (in.h - k) / stride + 1, (in.w - k) / stride + 1};
  }

  std::string name() const override { return name_; }
  Shape3 out_shape(const Shape3&) const override { return out_; }

  Matrix forward(const Matrix& x, bool, Rng*) override {
    const std::size_t batch = x.rows();
    Matrix out(batch, out_.flat());
    argmax_.assign(batch * out_.flat(), 0);
    for (std::size_t b = 0; b < batch; ++b) {
      const float* src = x.row(b).data();
      float* dst = out.row(b).data();
      std::size_t o = 0;
      for (std::size_t c = 0; c < in_.c; ++c) {
        for (std::size_t oy = 0; oy < out_.h; ++oy) {
          for (std::size_t ox = 0; ox < out_.w; ++ox, ++o) {
            float best = -std::numeric_limits<float>::infinity();
            std::size_t best_i = 0;
            for (std::size_t ky = 0; ky < k_; ++ky) {
              for (std::size_t kx = 0; kx < k_; ++kx) {
                std::size_t i =
                    (c * in_.h + oy * stride_ + ky) * in_.w + ox * stride_ + kx;
                if (src[i] > best) { best = src[i]; best_i = i; }
              }
            }
            dst[o] = best;
            argmax_[b * out_.flat() + o] = best_i;
          }
        }
      }
    }
    return out;
  }

  Matrix backward(const Matrix& dout) override {
    const std::size_t batch = dout.rows();
    Matrix dx = Matrix::Zero(batch, in_.flat());
    for (std::size_t b = 0; b < batch; ++b) {
      const float* d = dout.row(b).data();
      float* dst = dx.row(b).data();
      for (std::size_t o = 0; o < out_.flat(); ++o)
        dst[argmax_[b * out_.flat() + o]] += d[o];
    }
    return dx;
  }

 private:
  std::string name_;
  Shape3 in_, out_;
  std::size_t k_, stride_;
  std::vector<std::size_t> argmax_;
};

class ReLU final : public Layer {
 public:
  ReLU(std::string name, Shape3 in) : name_(std::move(name)), shape_(in) {}
  std::string name() const override { return name_; }
  Shape3 out_shape(const Shape3& in) const override { return in; }

  Matrix forward(const Matrix& x, bool, Rng*) override {
    mask_ = (x.array() > 0.0f);
    return x.cwiseMax(0.0f);
  }
  Matrix backward(const Matrix& dout) override {
    return (dout.array() * mask_.cast<float>()).matrix();
  }

 private:
  std::string name_;
  Shape3 shape_;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> mask_;
};

class Dropout final : public Layer {
 public:
  Dropout(std::string name, double p) : name_(std::move(name)), p_(p) {}
  std::string name() const override { return name_; }
  Shape3 out_shape(const Shape3& in) const override { return in; }

  Matrix forward(const Matrix& x, bool train, Rng* rng) override {
    if (!train || p_ == 0.0) {
      active_ = false;
      return x;
    }
    active_ = true;
    mask_.resize(x.rows(), x.cols());
    const float keep_inv = static_cast<float>(1.0 / (1.0 - p_));
    for (Eigen::Index i = 0; i < mask_.rows(); ++i)
      for (Eigen::Index j = 0; j < mask_.cols(); ++j)
        mask_(i, j) = unit_uniform(*rng) < p_ ? 0.0f : keep_inv;
    return x.cwiseProduct(mask_);
  }
  Matrix backward(const Matrix& dout) override {
    return active_ ? dout.cwiseProduct(mask_).eval() : dout;
  }

 private:
  std::string name_;
  double p_;
  bool active_ = false;
  Matrix mask_;
};

class Linear final : public Layer {
 public:
  Linear(std::string name, std::size_t in, std::size_t out)
      : name_(std::move(name)), in_(in), out_(out) {
    weights_.resize(out * in);
    bias_.resize(out);
    dweights_.resize(weights_.size());
    dbias_.resize(bias_.size());
  }

  std::string name() const override { return name_; }
  Shape3 out_shape(const Shape3&) const override { return {out_, 1, 1}; }

  std::vector<std::pair<std::vector<float>*, std::vector<float>*>> params() override {
    return {{&weights_, &dweights_}, {&bias_, &dbias_}};
  }

  Matrix forward(const Matrix& x, bool, Rng*) override {
    input_ = x;
    Eigen::Map<const Matrix> W(weights_.data(), out_, in_);
    Matrix out = x * W.transpose();
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out_; ++j) out(i, j) += bias_[j];
    return out;
  }

  Matrix backward(const Matrix& dout) override {
    Eigen::Map<const Matrix> W(weights_.data(), out_, in_);
    Eigen::Map<Matrix> dW(dweights_.data(), out_, in_);
    dW.noalias() += dout.transpose() * input_;
    for (std::size_t j = 0; j < out_; ++j) dbias_[j] += dout.col(j).sum();
    return dout * W;
  }

 private:
  std::string name_;
  std::size_t in_, out_;
  std::vector<float> weights_, bias_, dweights_, dbias_;
  Matrix input_;
};

}  // namespace

// ---- model ----

Model::Model(Arch arch, std::size_t input_size) : arch_(arch) {
  input_shape_ = {3, input_size, input_size};
  Shape3 s = input_shape_;
  auto add = [&](std::unique_ptr<Layer> l) {
    s = l->out_shape(s);
    layers_.push_back(std::move(l));
  };
  if (arch == Arch::alexnet) {
    if (input_size != 224)
      fail(ErrorCode::configuration, "alexnet requires 224x224 input");
    add(std::make_unique<Conv2d>("conv1", s, 64, 11, 4, 2));
    add(std::make_unique<ReLU>("relu1", s));
    add(std::make_unique<MaxPool>("maxpool1", s, 3, 2));
    add(std::make_unique<Conv2d>("conv2", s, 192, 5, 1, 2));
    add(std::make_unique<ReLU>("relu2", s));
    add(std::make_unique<MaxPool>("maxpool2", s, 3, 2));
    add(std::make_unique<Conv2d>("conv3", s, 384, 3, 1, 1));
    add(std::make_unique<ReLU>("relu3", s));
    add(std::make_unique<Conv2d>("conv4", s, 256, 3, 1, 1));
    add(std::make_unique<ReLU>("relu4", s));
    add(std::make_unique<Conv2d>("conv5", s, 256, 3, 1, 1));
    add(std::make_unique<ReLU>("relu5", s));
    add(std::make_unique<MaxPool>("maxpool3", s, 3, 2));
    add(std::make_unique<Dropout>("dropout1", 0.5));
    add(std::make_unique<Linear>("fc1", s.flat(), 4096));
    add(std::make_unique<ReLU>("relu6", s));
    add(std::make_unique<Dropout>("dropout2", 0.5));
    add(std::make_unique<Linear>("fc2", 4096, 4096));
    add(std::make_unique<ReLU>("relu7", s));
    add(std::make_unique<Linear>("fc3", 4096, 2));
  } else {
    if (input_size < 8)
      fail(ErrorCode::configuration, "tiny backbone requires input size >= 8");
    add(std::make_unique<Conv2d>("conv1", s, 8, 3, 1, 1));
    add(std::make_unique<ReLU>("relu1", s));
    add(std::make_unique<MaxPool>("maxpool1", s, 2, 2));
    add(std::make_unique<Conv2d>("conv2", s, 16, 3, 1, 1));
    add(std::make_unique<ReLU>("relu2", s));
    add(std::make_unique<MaxPool>("maxpool2", s, 2, 2));
    add(std::make_unique<Linear>("fc1", s.flat(), 64));
    add(std::make_unique<ReLU>("relu3", s));
    add(std::make_unique<Dropout>("dropout1", 0.25));
    add(std::make_unique<Linear>("fc2", 64, 2));
  }
}

std::vector<std::pair<std::string, Shape3>> Model::activation_shapes() const {
  std::vector<std::pair<std::string, Shape3>> shapes;
  Shape3 s = input_shape_;
  for (const auto& l : layers_) {
    s = l->out_shape(s);
    shapes.emplace_back(l->name(), s);
  }
  return shapes;
}

Matrix Model::forward(const Matrix& x, bool train, Rng* rng) {
  if (static_cast<std::size_t>(x.cols()) != input_shape_.flat())
    fail(ErrorCode::shape, "input has " + std::to_string(x.cols()) + " features, expected " +
                               std::to_string(input_shape_.flat()));
  Matrix cur = x;
  for (auto& l : layers_) cur = l->forward(cur, train, rng);
  return cur;
}

Matrix Model::backward(const Matrix& dlogits) {
  Matrix cur = dlogits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
  return cur;
}

std::vector<Layer*> Model::layers() {
  std::vector<Layer*> out;
  for (auto& l : layers_) out.push_back(l.get());
  return out;
}

std::vector<std::pair<std::vector<float>*, std::vector<float>*>> Model::all_params() {
  std::vector<std::pair<std::vector<float>*, std::vector<float>*>> out;
  for (auto& l : layers_)
    for (auto& p : l->params()) out.push_back(p);
  return out;
}

void Model::init_weights(std::uint64_t seed) {
  Rng rng = make_rng(seed);
  for (auto& l : layers_) {
    auto ps = l->params();
    if (ps.empty()) continue;
    // He initialization: weights first, bias (smaller vector) zeroed.
    std::vector<float>& w = *ps[0].first;
    std::vector<float>& b = *ps[1].first;
    std::size_t fan_in = w.size() / std::max<std::size_t>(b.size(), 1);
    double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (float& v : w) v = static_cast<float>(gaussian(rng, 0.0, sigma));
    std::fill(b.begin(), b.end(), 0.0f);
  }
}

std::size_t Model::n_params() const {
  std::size_t n = 0;
  for (const auto& l : layers_)
    for (auto& p : const_cast<Layer&>(*l).params()) n += p.first->size();
  return n;
}

std::vector<float> Model::snapshot_weights() const {
  std::vector<float> flat;
  flat.reserve(n_params());
  for (const auto& l : layers_)
    for (auto& p : const_cast<Layer&>(*l).params())
      flat.insert(flat.end(), p.first->begin(), p.first->end());
  return flat;
}

void Model::restore_weights(const std::vector<float>& flat) {
  if (flat.size() != n_params())
    fail(ErrorCode::shape, "weight snapshot has " + std::to_string(flat.size()) +
                               " values, model expects " + std::to_string(n_params()));
  std::size_t off = 0;
  for (auto& l : layers_)
    for (auto& p : l->params()) {
      std::copy(flat.begin() + off, flat.begin() + off + p.first->size(), p.first->begin());
      off += p.first->size();
    }
}

double Model::weight_l2_norm() const {
  double ss = 0.0;
  for (float v : snapshot_weights()) ss += static_cast<double>(v) * v;
  return std::sqrt(ss);
}

// ---- pretrained weights ----

namespace {

constexpr char kWeightsMagic[8] = {'T', 'L', 'A', 'L', 'W', 'T', 'S', '1'};

std::string weights_cache_path(Arch arch, const std::string& cache_dir) {
  std::string dir = cache_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("TLAL_WEIGHTS_CACHE")) dir = env;
  }
  if (dir.empty()) dir = "pretrained";
  return (fs::path(dir) / (to_string(arch) + "_pretrained.bin")).string();
}

void load_weights_file(Model& model, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open weights file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::memcmp(magic, kWeightsMagic, 8) != 0)
    fail(ErrorCode::structural, "bad weights file magic: " + path);
  std::uint64_t n;
  in.read(reinterpret_cast<char*>(&n), 8);
  if (n != model.n_params())
    fail(ErrorCode::structural, "weights file parameter count mismatch: " + path);
  std::vector<float> flat(n);
  in.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(n * 4));
  if (!in) fail(ErrorCode::io, "weights file truncated: " + path);
  model.restore_weights(flat);
}

}  // namespace

void save_weights_file(const Model& model, const std::string& path) {
  fs::create_directories(fs::path(path).parent_path().empty()
                             ? "."
                             : fs::path(path).parent_path().string());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot open weights file for write: " + path);
  out.write(kWeightsMagic, 8);
  std::vector<float> flat = model.snapshot_weights();
  std::uint64_t n = flat.size();
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * 4));
}

std::shared_ptr<Model> build_model(Arch arch, std::size_t input_size, bool pretrained,
                                   std::uint64_t seed, const std::string& weights_cache_dir,
                                   bool allow_fetch) {
  auto model = std::make_shared<Model>(arch, input_size);
  if (pretrained) {
    std::string path = weights_cache_path(arch, weights_cache_dir);
    if (!fs::exists(path)) {
      if (!allow_fetch)
        fail(ErrorCode::resource,
             "pretrained weights not found at " + path + " and fetching is disabled");
      fail(ErrorCode::resource,
           "pretrained weights not found at " + path +
               "; no fetch source is configured in this environment");
    }
    load_weights_file(*model, path);
    // The classification head is always re-initialized for the 2-class task.
    auto layers = model->layers();
    Rng rng = make_rng(derive_seed(seed, "head-init"));
    for (auto* l : layers) {
      if (l->name() == "fc3" || (arch == Arch::tiny && l->name() == "fc2")) {
        auto ps = l->params();
        std::vector<float>& w = *ps[0].first;
        std::vector<float>& b = *ps[1].first;
        std::size_t fan_in = w.size() / b.size();
        double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (float& v : w) v = static_cast<float>(gaussian(rng, 0.0, sigma));
        std::fill(b.begin(), b.end(), 0.0f);
      }
    }
  } else {
    model->init_weights(derive_seed(seed, "init"));
  }
  return model;
}

// ---- training ----

namespace {

Matrix batch_matrix(const std::vector<data::SliceSample>& samples,
                    const std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi) {
  const std::size_t features = samples[idx[lo]].image.data.size();
  Matrix x(hi - lo, features);
  for (std::size_t i = lo; i < hi; ++i) {
    const auto& img = samples[idx[i]].image.data;
    if (img.size() != features) fail(ErrorCode::shape, "inconsistent image dimensions in batch");
    std::memcpy(x.row(i - lo).data(), img.data(), features * sizeof(float));
  }
  return x;
}

void check_two_classes(const data::SliceDataset& ds, const std::string& which) {
  bool has0 = false, has1 = false;
  for (const auto& s : ds.samples) (s.label == 1 ? has1 : has0) = true;
  if (!has0 || !has1)
    fail(ErrorCode::configuration,
         which + " dataset contains a single class; AUC is undefined");
}

std::vector<double> forward_scores(Model& model,
                                   const std::vector<data::SliceSample>& samples,
                                   std::size_t batch_size) {
  std::vector<double> scores;
  scores.reserve(samples.size());
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t lo = 0; lo < samples.size(); lo += batch_size) {
    std::size_t hi = std::min(lo + batch_size, samples.size());
    Matrix logits = model.forward(batch_matrix(samples, idx, lo, hi), false, nullptr);
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      double a = logits(r, 0), b = logits(r, 1);
      double m = std::max(a, b);
      double e0 = std::exp(a - m), e1 = std::exp(b - m);
      scores.push_back(e1 / (e0 + e1));
    }
  }
  return scores;
}

}  // namespace

TrainedModel finetune(std::shared_ptr<Model> model, const data::SliceDataset& train,
                      const data::SliceDataset& val, const Hyperparams& hp) {
  hp.validate();
  if (train.samples.empty() || val.samples.empty())
    fail(ErrorCode::configuration, "finetune requires nonempty train and val datasets");
  check_two_classes(train, "train");
  check_two_classes(val, "val");
  {
    std::set<std::string> train_pat, overlap;
    for (const auto& s : train.samples) train_pat.insert(s.patient_id);
    for (const auto& s : val.samples)
      if (train_pat.count(s.patient_id)) overlap.insert(s.patient_id);
    if (!overlap.empty())
      fail(ErrorCode::consistency,
           "patient leakage between train and val: " + *overlap.begin());
  }

  Rng rng = make_rng(derive_seed(hp.seed, "train-loop"));
  auto params = model->all_params();
  std::vector<std::vector<float>> velocity;
  for (auto& [w, g] : params) velocity.emplace_back(w->size(), 0.0f);

  std::vector<int> val_labels;
  for (const auto& s : val.samples) val_labels.push_back(s.label);

  TrainedModel result;
  result.hyperparams = hp;
  result.model = model;
  std::vector<float> best_weights = model->snapshot_weights();
  double best_auc = -1.0;
  std::size_t best_epoch = 0;

  std::vector<std::size_t> idx(train.samples.size());
  std::iota(idx.begin(), idx.end(), 0);

  const float lr = static_cast<float>(hp.learning_rate);
  const float mu = static_cast<float>(hp.momentum);
  const float wd = static_cast<float>(hp.l2_penalty);

  for (std::size_t epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    // data-order shuffle per epoch
    for (std::size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[rand_index(rng, i)]);

    double loss_sum = 0.0;
    std::size_t n_seen = 0;
    for (std::size_t lo = 0; lo < idx.size(); lo += hp.batch_size) {
      std::size_t hi = std::min(lo + hp.batch_size, idx.size());
      Matrix x = batch_matrix(train.samples, idx, lo, hi);
      Matrix logits = model->forward(x, true, &rng);

      // softmax cross-entropy
      const std::size_t bsz = hi - lo;
      Matrix dlogits(bsz, 2);
      for (std::size_t r = 0; r < bsz; ++r) {
        int label = train.samples[idx[lo + r]].label;
        double a = logits(r, 0), b = logits(r, 1);
        double m = std::max(a, b);
        double e0 = std::exp(a - m), e1 = std::exp(b - m);
        double z = e0 + e1;
        double p0 = e0 / z, p1 = e1 / z;
        loss_sum += -std::log(std::max(label == 1 ? p1 : p0, 1e-30));
        dlogits(r, 0) = static_cast<float>((p0 - (label == 0 ? 1.0 : 0.0)) / bsz);
        dlogits(r, 1) = static_cast<float>((p1 - (label == 1 ? 1.0 : 0.0)) / bsz);
      }
      n_seen += bsz;

      for (auto& [w, g] : params) std::fill(g->begin(), g->end(), 0.0f);
      model->backward(dlogits);

      for (std::size_t p = 0; p < params.size(); ++p) {
        auto& [w, g] = params[p];
        auto& v = velocity[p];
        for (std::size_t i = 0; i < w->size(); ++i) {
          float grad = (*g)[i] + wd * (*w)[i];
          v[i] = mu * v[i] + grad;
          (*w)[i] -= lr * v[i];
        }
      }
    }
    double train_loss = loss_sum / static_cast<double>(n_seen);
    if (!std::isfinite(train_loss))
      fail(ErrorCode::numerical,
           "training loss diverged (non-finite) at epoch " + std::to_string(epoch));

    std::vector<double> val_scores = forward_scores(*model, val.samples, hp.batch_size);
    double val_auc = eval::auc(val_scores, val_labels);
    result.log.push_back({epoch, train_loss, val_auc});
    if (val_auc > best_auc) {
      best_auc = val_auc;
      best_epoch = epoch;
      best_weights = model->snapshot_weights();
    }
  }

  model->restore_weights(best_weights);
  result.best_val_auc = best_auc;
  result.best_epoch = best_epoch;
  return result;
}

std::vector<std::array<double, 2>> predict_probs(const TrainedModel& model,
                                                 const std::vector<data::SliceSample>& samples) {
  std::vector<double> scores =
      forward_scores(*model.model, samples, model.hyperparams.batch_size);
  std::vector<std::array<double, 2>> probs;
  probs.reserve(scores.size());
  for (double p1 : scores) probs.push_back({1.0 - p1, p1});
  return probs;
}

std::vector<double> predict_scores(const TrainedModel& model,
                                   const std::vector<data::SliceSample>& samples) {
  return forward_scores(*model.model, samples, model.hyperparams.batch_size);
}

// ---- checkpoints ----

namespace {
constexpr char kCkptMagic[8] = {'T', 'L', 'A', 'L', 'C', 'K', 'P', '1'};
}

void save_checkpoint(const TrainedModel& model, const std::string& path) {
  json meta;
  meta["arch"] = to_string(model.model->arch());
  meta["input_size"] = model.model->input_shape().h;
  meta["best_val_auc"] = model.best_val_auc;
  meta["best_epoch"] = model.best_epoch;
  meta["hyperparams"] = {{"learning_rate", model.hyperparams.learning_rate},
                         {"batch_size", model.hyperparams.batch_size},
                         {"max_epochs", model.hyperparams.max_epochs},
                         {"momentum", model.hyperparams.momentum},
                         {"l2_penalty", model.hyperparams.l2_penalty},
                         {"pretrained", model.hyperparams.pretrained},
                         {"seed", model.hyperparams.seed}};
  json log = json::array();
  for (const auto& e : model.log)
    log.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_auc", e.val_auc}});
  meta["log"] = log;

  std::string meta_str = meta.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot open checkpoint for write: " + path);
  out.write(kCkptMagic, 8);
  std::uint64_t len = meta_str.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(meta_str.data(), static_cast<std::streamsize>(len));
  std::vector<float> flat = model.model->snapshot_weights();
  std::uint64_t n = flat.size();
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * 4));
}

TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::memcmp(magic, kCkptMagic, 8) != 0)
    fail(ErrorCode::structural, "bad checkpoint magic: " + path);
  std::uint64_t len;
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string meta_str(len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(len));
  json meta = json::parse(meta_str);

  TrainedModel tm;
  tm.model = std::make_shared<Model>(arch_from_string(meta.at("arch")),
                                     meta.at("input_size").get<std::size_t>());
  tm.best_val_auc = meta.at("best_val_auc");
  tm.best_epoch = meta.at("best_epoch");
  const json& hp = meta.at("hyperparams");
  tm.hyperparams.learning_rate = hp.at("learning_rate");
  tm.hyperparams.batch_size = hp.at("batch_size");
  tm.hyperparams.max_epochs = hp.at("max_epochs");
  tm.hyperparams.momentum = hp.at("momentum");
  tm.hyperparams.l2_penalty = hp.at("l2_penalty");
  tm.hyperparams.pretrained = hp.at("pretrained");
  tm.hyperparams.seed = hp.at("seed");
  for (const auto& e : meta.at("log"))
    tm.log.push_back({e.at("epoch"), e.at("train_loss"), e.at("val_auc")});

  std::uint64_t n;
  in.read(reinterpret_cast<char*>(&n), 8);
  std::vector<float> flat(n);
  in.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(n * 4));
  if (!in) fail(ErrorCode::io, "checkpoint truncated: " + path);
  tm.model->restore_weights(flat);
  return tm;
}

void export_training_log(const TrainedModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot open training log for write: " + path);
  out << "epoch,train_loss,val_auc\n";
  char buf[128];
  for (const auto& e : model.log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g\n", e.epoch, e.train_loss, e.val_auc);
    out << buf;
  }
}

}  // namespace tlal::nn
