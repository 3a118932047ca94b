#pragma once

#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tlal/committee.hpp"
#include "tlal/common.hpp"
#include "tlal/data.hpp"
#include "tlal/evaluation.hpp"
#include "tlal/nn.hpp"
#include "tlal/selection.hpp"

namespace tlal::pipeline {

inline constexpr const char* kToolVersion = "1.0.0";

struct ExperimentConfig {
  // dataset
  std::string source = "synthetic";  // "synthetic" | "directory"
  std::string dataset_dir;           // HGG/ + LGG/ patient layout when source=directory
  std::size_t synth_hgg = 30, synth_lgg = 10;
  data::SyntheticParams synth;
  data::Variant variant = data::Variant::imbalanced;

  // patient-level split sizes
  std::size_t n_train = 24, n_val = 8, n_test = 8;

  // model + training
  nn::Arch arch = nn::Arch::tiny;
  std::size_t image_size = 32;
  nn::Hyperparams hp;  // learning_rate applies to post-selection finetuning
  std::string weights_cache;  // pretrained-weights cache dir ($TLAL_WEIGHTS_CACHE fallback)
  bool allow_fetch = false;   // forbid network fetches unless explicitly enabled

  // committee
  std::array<double, 3> committee_learning_rates = committee::kLearningRates;
  double initial_fraction = 0.30;

  // selection
  std::string strategy = "proposed";  // proposed | random | range | baseline
  double discard_pct = 10.0;
  double sample_fraction = 0.30;
  double range_lo = 0.0, range_hi = 30.0;

  // evaluation
  std::vector<std::string> eval_strategies = {"proposed", "random", "baseline"};
  std::size_t n_runs = 10;
  bool redraw_initial_subset = false;

  // sweep
  std::vector<double> sweep_fractions = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  std::vector<std::string> sweep_strategies = {"proposed", "random"};

  std::uint64_t master_seed = 1234;
  std::string output_dir = "out";

  // Throws a configuration error on any value a downstream stage would
  // reject; run_pipeline calls this before touching the filesystem.
  void validate() const;

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);
};

struct RunManifest {
  std::string config_json;  // full snapshot
  std::map<std::string, std::uint64_t> derived_seeds;
  std::map<std::string, std::string> artifacts;  // stage artifact name -> path
  std::string tool_version = kToolVersion;
  std::string started_at, finished_at;  // ISO 8601 UTC
};

void save_manifest(const RunManifest& m, const std::string& path);
RunManifest load_manifest(const std::string& path);

// Advisory lock on the output directory; a second holder is a resource error.
class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
};

// ---- stages ----
// Each stage reads its prerequisites from cfg.output_dir and persists its
// artifacts there, so every stage is independently re-runnable.

void stage_synth(const ExperimentConfig& cfg);    // cohort/ + cohort_index.json
void stage_ingest(const ExperimentConfig& cfg);   // cohort_index.json over dataset_dir
void stage_split(const ExperimentConfig& cfg);    // split.json
void stage_build(const ExperimentConfig& cfg);    // dataset/ bundle
void stage_committee(const ExperimentConfig& cfg);  // initial_subset.json, committee/
void stage_score(const ExperimentConfig& cfg);    // tensor.csv
void stage_rank(const ExperimentConfig& cfg);     // ranking.tsv
selection::SelectionResult stage_select(const ExperimentConfig& cfg);  // selection.json
void stage_train(const ExperimentConfig& cfg);    // model.ckpt from selection.json
std::vector<eval::AggregateResult> stage_evaluate(const ExperimentConfig& cfg);
std::vector<eval::AggregateResult> stage_sweep(const ExperimentConfig& cfg);
void stage_report(const ExperimentConfig& cfg, const std::set<std::string>& kinds);

// Full workflow: ingest/generate -> split -> build -> initial subset ->
// committee -> score -> rank -> select -> finetune -> evaluate -> aggregate.
// Any stage error halts with the stage name and replay instructions;
// partial artifacts are retained.
RunManifest run_pipeline(const ExperimentConfig& cfg);

struct ReplayReport {
  bool selections_identical = false;
  double max_auc_delta = 0.0;
  bool ok = false;
};

// Re-runs the pipeline from a manifest into replay_out_dir and compares
// selection id-sets (bit-exact) and per-run AUC values (<= 1e-6).
ReplayReport replay(const std::string& manifest_path, const std::string& replay_out_dir);

}  // namespace tlal::pipeline
