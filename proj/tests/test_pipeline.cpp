#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "tlal/common.hpp"
#include "tlal/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tlal;
using pipeline::ExperimentConfig;

namespace {

fs::path temp_dir(const std::string& leaf) {
  fs::path p = fs::temp_directory_path() / "tlal_pipeline_tests" / leaf;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

// Minimal but complete synthetic experiment; runs in well under a second.
std::string micro_config(const fs::path& out) {
  return std::string(R"({
    "dataset": {"source": "synthetic", "synthetic": {"n_hgg": 4, "n_lgg": 4,
      "nx": 24, "ny": 24, "nz": 40, "outlier_rate": 0.0}},
    "split": {"train": 4, "val": 2, "test": 2},
    "model": {"arch": "tiny", "image_size": 12, "pretrained": false},
    "training": {"learning_rate": 0.05, "max_epochs": 1, "batch_size": 8},
    "selection": {"strategy": "proposed", "discard_pct": 10.0, "sample_fraction": 0.30},
    "evaluation": {"strategies": ["proposed", "random"], "n_runs": 2},
    "seed": 4321,
    "output_dir": ")") +
         out.string() + "\"}";
}

}  // namespace

TEST_CASE("config round-trips through JSON") {
  auto cfg = ExperimentConfig::from_json(micro_config("x"));
  auto again = ExperimentConfig::from_json(cfg.to_json());
  CHECK(again.to_json() == cfg.to_json());
  CHECK(again.synth_hgg == 4);
  CHECK(again.hp.max_epochs == 1);
  CHECK(again.master_seed == 4321);
}

TEST_CASE("unknown config keys are rejected at every level") {
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"bogus": 1})"), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"dataset": {"sourze": "synthetic"}})"),
                  Error);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json(R"({"selection": {"strategy": "proposed", "pct": 5}})"),
      Error);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"training": {"lr": 0.1}})"), Error);
}

TEST_CASE("validation rejects an infeasible sample fraction before any training") {
  auto cfg = ExperimentConfig::from_json(micro_config("x"));
  cfg.sample_fraction = 0.9;  // middle 80% cannot yield 90% of the pool
  cfg.discard_pct = 10.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("validation pins the committee learning rates") {
  auto cfg = ExperimentConfig::from_json(micro_config("x"));
  cfg.committee_learning_rates = {0.1, 0.2, 0.3};
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("validation rejects mismatched synthetic cohort and split sizes") {
  auto cfg = ExperimentConfig::from_json(micro_config("x"));
  cfg.synth_hgg = 10;  // 14 patients vs 8 split slots
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("stage prerequisites fail with the missing stage's name") {
  fs::path out = temp_dir("prereq");
  auto cfg = ExperimentConfig::from_json(micro_config(out));
  fs::create_directories(out);
  try {
    pipeline::stage_rank(cfg);
    FAIL("expected a missing-artifact error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("score") != std::string::npos);
  }
}

TEST_CASE("full micro pipeline persists every advertised artifact") {
  fs::path out = temp_dir("micro");
  auto cfg = ExperimentConfig::from_json(micro_config(out));
  auto manifest = pipeline::run_pipeline(cfg);

  for (const char* f : {"cohort_index.json", "split.json", "initial_subset.json",
                        "tensor.csv", "ranking.tsv", "selection.json", "model.ckpt",
                        "backbone_weights.bin", "results.csv", "summary.csv",
                        "manifest.json"})
    CHECK_MESSAGE(fs::exists(out / f), f);
  CHECK(fs::exists(out / "dataset" / "manifest.jsonl"));
  for (int m = 0; m < 3; ++m)
    CHECK(fs::exists(out / "committee" / ("member_" + std::to_string(m) + ".ckpt")));

  CHECK(manifest.tool_version == pipeline::kToolVersion);
  CHECK_FALSE(manifest.started_at.empty());
  CHECK(manifest.derived_seeds.count("synth"));
  CHECK(manifest.derived_seeds.count("evaluate:proposed:1"));

  auto loaded = pipeline::load_manifest((out / "manifest.json").string());
  // Snapshots may differ in whitespace across save/load; compare normalized.
  CHECK(ExperimentConfig::from_json(loaded.config_json).to_json() ==
        ExperimentConfig::from_json(manifest.config_json).to_json());
  CHECK(loaded.derived_seeds == manifest.derived_seeds);

  SUBCASE("replay reproduces the recorded run") {
    auto rep = pipeline::replay((out / "manifest.json").string(),
                                temp_dir("micro_replay").string());
    CHECK(rep.ok);
    CHECK(rep.selections_identical);
    CHECK(rep.max_auc_delta <= 1e-6);
  }

  SUBCASE("replay into the original directory is refused") {
    CHECK_THROWS_AS(pipeline::replay((out / "manifest.json").string(), out.string()),
                    Error);
  }
}

TEST_CASE("a second lock holder on the same output directory is refused") {
  fs::path out = temp_dir("lock");
  fs::create_directories(out);
  pipeline::DirLock first(out.string());
  CHECK_THROWS_AS(pipeline::DirLock second(out.string()), Error);
}

TEST_CASE("stage seeds are independent of later additions") {
  // Adding runs must never perturb earlier runs' seeds.
  CHECK(derive_seed(7, "evaluate:proposed", 0) != derive_seed(7, "evaluate:proposed", 1));
  CHECK(derive_seed(7, "evaluate:proposed", 0) != derive_seed(7, "evaluate:random", 0));
  CHECK(derive_seed(7, "split") == derive_seed(7, "split"));
  CHECK(derive_seed(7, "split") != derive_seed(8, "split"));
}
