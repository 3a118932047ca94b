#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "test_helpers.hpp"
#include "tlal/evaluation.hpp"
#include "tlal/nn.hpp"

namespace fs = std::filesystem;
using namespace tlal;
using namespace tlal::nn;

namespace {

Hyperparams fast_hp(std::uint64_t seed = 1) {
  Hyperparams hp;
  hp.learning_rate = 0.01;
  hp.batch_size = 16;
  hp.max_epochs = 4;
  hp.momentum = 0.8;
  hp.l2_penalty = 1e-4;
  hp.pretrained = false;
  hp.seed = seed;
  return hp;
}

}  // namespace

TEST_CASE("alexnet activation shapes match the canonical topology") {
  Model model(Arch::alexnet, 224);
  auto shapes = model.activation_shapes();
  auto shape_of = [&](const std::string& name) -> Shape3 {
    for (const auto& [n, s] : shapes)
      if (n == name) return s;
    FAIL("layer not found: ", name);
    return {};
  };
  CHECK(shape_of("conv1") == Shape3{64, 55, 55});
  CHECK(shape_of("maxpool1") == Shape3{64, 27, 27});
  CHECK(shape_of("conv2") == Shape3{192, 27, 27});
  // canonical topology: 13x13 here (the pretrained-weights-compatible shape)
  CHECK(shape_of("maxpool2") == Shape3{192, 13, 13});
  CHECK(shape_of("conv3") == Shape3{384, 13, 13});
  CHECK(shape_of("conv4") == Shape3{256, 13, 13});
  CHECK(shape_of("conv5") == Shape3{256, 13, 13});
  CHECK(shape_of("maxpool3") == Shape3{256, 6, 6});
  CHECK(shape_of("fc1") == Shape3{4096, 1, 1});
  CHECK(shape_of("fc2") == Shape3{4096, 1, 1});
  CHECK(shape_of("fc3") == Shape3{2, 1, 1});
}

TEST_CASE("alexnet forward pass emits 2 logits for a 3x224x224 input") {
  Model model(Arch::alexnet, 224);
  model.init_weights(1);
  Matrix x = Matrix::Zero(1, 3 * 224 * 224);
  for (Eigen::Index i = 0; i < x.cols(); ++i)
    x(0, i) = static_cast<float>((i % 97) / 97.0 - 0.5);
  Matrix logits = model.forward(x, false, nullptr);
  CHECK(logits.rows() == 1);
  CHECK(logits.cols() == 2);
  CHECK(std::isfinite(logits(0, 0)));
  CHECK(std::isfinite(logits(0, 1)));
}

TEST_CASE("deterministic initialization") {
  auto a = build_model(Arch::tiny, 16, false, 7);
  auto b = build_model(Arch::tiny, 16, false, 7);
  CHECK(a->snapshot_weights() == b->snapshot_weights());
  auto c = build_model(Arch::tiny, 16, false, 8);
  CHECK(a->snapshot_weights() != c->snapshot_weights());
}

TEST_CASE("pretrained weights: resource error when missing, load when present") {
  fs::path cache = fs::temp_directory_path() / "tlal_weights_test";
  fs::remove_all(cache);
  try {
    build_model(Arch::tiny, 16, true, 1, cache.string(), false);
    FAIL("expected resource error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::resource);
  }

  // stage a weights file and load it
  fs::create_directories(cache);
  Model donor(Arch::tiny, 16);
  donor.init_weights(99);
  save_weights_file(donor, (cache / "tiny_pretrained.bin").string());
  auto loaded = build_model(Arch::tiny, 16, true, 1, cache.string(), false);
  // backbone weights equal the donor's; only the head is re-initialized
  auto dw = donor.snapshot_weights();
  auto lw = loaded->snapshot_weights();
  REQUIRE(dw.size() == lw.size());
  std::size_t same = 0;
  for (std::size_t i = 0; i < dw.size(); ++i)
    if (dw[i] == lw[i]) ++same;
  CHECK(same > dw.size() / 2);  // conv layers untouched
  CHECK(dw != lw);              // head re-initialized
  fs::remove_all(cache);
}

TEST_CASE("finetune learns a separable problem and checkpoints the best epoch") {
  auto train = helpers::make_separable_dataset(40, 12, 1, "tr");
  auto val = helpers::make_separable_dataset(20, 12, 2, "va");
  auto model = build_model(Arch::tiny, 12, false, 5);
  auto tm = finetune(model, train, val, fast_hp());

  REQUIRE(tm.log.size() == 4);
  // checkpoint dominance: best equals the max over per-epoch AUCs
  double max_auc = 0.0;
  for (const auto& e : tm.log) max_auc = std::max(max_auc, e.val_auc);
  CHECK(tm.best_val_auc == doctest::Approx(max_auc));
  CHECK(tm.best_val_auc >= tm.log.front().val_auc);
  CHECK(tm.best_val_auc > 0.9);  // separable

  // separation oracle on held-out data
  auto held = helpers::make_separable_dataset(20, 12, 3, "te");
  auto probs = predict_probs(tm, held.samples);
  double mean_pos = 0.0, mean_neg = 0.0;
  for (std::size_t i = 0; i < held.samples.size(); ++i)
    (held.samples[i].label == 1 ? mean_pos : mean_neg) += probs[i][1];
  CHECK(mean_pos / 20 > mean_neg / 20);
}

TEST_CASE("finetune error paths") {
  auto train = helpers::make_separable_dataset(10, 12, 1, "tr");
  auto val = helpers::make_separable_dataset(5, 12, 2, "va");

  data::SliceDataset empty;
  CHECK_THROWS_AS(finetune(build_model(Arch::tiny, 12, false, 1), empty, val, fast_hp()),
                  Error);

  data::SliceDataset single;
  for (const auto& s : train.samples)
    if (s.label == 0) single.samples.push_back(s);
  try {
    finetune(build_model(Arch::tiny, 12, false, 1), single, val, fast_hp());
    FAIL("expected configuration error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::configuration);
  }

  Hyperparams bad = fast_hp();
  bad.max_epochs = 0;
  CHECK_THROWS_AS(finetune(build_model(Arch::tiny, 12, false, 1), train, val, bad), Error);
}

TEST_CASE("predict_probs normalization and determinism") {
  auto train = helpers::make_separable_dataset(20, 12, 1, "tr");
  auto val = helpers::make_separable_dataset(10, 12, 2, "va");
  auto tm = finetune(build_model(Arch::tiny, 12, false, 5), train, val, fast_hp());

  auto probs = predict_probs(tm, val.samples);
  for (const auto& p : probs) {
    CHECK(p[0] >= 0.0);
    CHECK(p[1] >= 0.0);
    CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-6));
  }
  auto probs2 = predict_probs(tm, val.samples);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    CHECK(probs[i][0] == probs2[i][0]);
    CHECK(probs[i][1] == probs2[i][1]);
  }
}

TEST_CASE("l2 penalty shrinks the weight norm") {
  auto train = helpers::make_separable_dataset(30, 12, 1, "tr");
  auto val = helpers::make_separable_dataset(10, 12, 2, "va");

  Hyperparams weak = fast_hp(3);
  weak.l2_penalty = 1e-5;
  auto tm_weak = finetune(build_model(Arch::tiny, 12, false, 3), train, val, weak);

  Hyperparams strong = fast_hp(3);
  strong.l2_penalty = 1e-2;  // 1000x larger
  auto tm_strong = finetune(build_model(Arch::tiny, 12, false, 3), train, val, strong);

  CHECK(tm_strong.model->weight_l2_norm() < tm_weak.model->weight_l2_norm());
}

TEST_CASE("checkpoint save/load round trip") {
  auto train = helpers::make_separable_dataset(15, 12, 1, "tr");
  auto val = helpers::make_separable_dataset(8, 12, 2, "va");
  auto tm = finetune(build_model(Arch::tiny, 12, false, 5), train, val, fast_hp());

  std::string path = "test_ckpt.bin";
  save_checkpoint(tm, path);
  auto back = load_checkpoint(path);
  CHECK(back.best_val_auc == tm.best_val_auc);
  CHECK(back.best_epoch == tm.best_epoch);
  CHECK(back.log.size() == tm.log.size());
  CHECK(back.model->snapshot_weights() == tm.model->snapshot_weights());
  CHECK(back.hyperparams.learning_rate == tm.hyperparams.learning_rate);

  // predictions identical through the round trip
  auto p1 = predict_scores(tm, val.samples);
  auto p2 = predict_scores(back, val.samples);
  CHECK(p1 == p2);

  export_training_log(tm, "test_log.csv");
  std::ifstream log("test_log.csv");
  std::string header;
  std::getline(log, header);
  CHECK(header == "epoch,train_loss,val_auc");
  fs::remove(path);
  fs::remove("test_log.csv");
}

TEST_CASE("shape error on malformed input") {
  Model model(Arch::tiny, 12);
  model.init_weights(1);
  Matrix x = Matrix::Zero(1, 50);
  CHECK_THROWS_AS(model.forward(x, false, nullptr), Error);
}
