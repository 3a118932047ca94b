#include "tlal/tlal.h"

#include <cstring>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>

#include "tlal/common.hpp"
#include "tlal/evaluation.hpp"
#include "tlal/pipeline.hpp"
#include "tlal/uncertainty.hpp"

namespace {

thread_local std::string g_last_error;

tlal_status set_error(tlal_status code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

template <typename Fn>
tlal_status wrap(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return TLAL_OK;
  } catch (const tlal::Error& e) {
    return set_error(static_cast<tlal_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::exception& e) {
    return set_error(TLAL_E_INTERNAL, e.what());
  } catch (...) {
    return set_error(TLAL_E_INTERNAL, "unknown error");
  }
}

tlal_status require(bool ok, const char* msg) {
  return ok ? TLAL_OK : set_error(TLAL_E_CONFIGURATION, msg);
}

}  // namespace

struct tlal_experiment {
  tlal::pipeline::ExperimentConfig config;
  std::string config_snapshot;  // backing storage for tlal_experiment_config
};

extern "C" {

const char* tlal_version(void) { return tlal::pipeline::kToolVersion; }

const char* tlal_last_error(void) { return g_last_error.c_str(); }

tlal_status tlal_entropy(const double p[2], double* out) {
  if (auto s = require(p && out, "tlal_entropy: null argument")) return s;
  return wrap([&] { *out = tlal::uncertainty::entropy({p[0], p[1]}); });
}

tlal_status tlal_kl_divergence(const double p[2], const double q[2], double* out) {
  if (auto s = require(p && q && out, "tlal_kl_divergence: null argument")) return s;
  return wrap([&] { *out = tlal::uncertainty::kl_divergence({p[0], p[1]}, {q[0], q[1]}); });
}

tlal_status tlal_uncertainty_score(const double probs[6], double* entropy_sum,
                                   double* kl_sum, double* score) {
  if (auto s = require(probs != nullptr, "tlal_uncertainty_score: null probs")) return s;
  return wrap([&] {
    std::vector<tlal::uncertainty::Dist> members = {
        {probs[0], probs[1]}, {probs[2], probs[3]}, {probs[4], probs[5]}};
    auto parts = tlal::uncertainty::uncertainty_score(members);
    if (entropy_sum) *entropy_sum = parts.entropy_sum;
    if (kl_sum) *kl_sum = parts.kl_sum;
    if (score) *score = parts.score;
  });
}

tlal_status tlal_auc(const double* scores, const int* labels, size_t n, double* out) {
  if (auto s = require(scores && labels && out, "tlal_auc: null argument")) return s;
  return wrap([&] {
    std::vector<double> sv(scores, scores + n);
    std::vector<int> lv(labels, labels + n);
    *out = tlal::eval::auc(sv, lv);
  });
}

tlal_status tlal_aggregate(const double* values, size_t n, double* mean, double* ci_low,
                           double* ci_high) {
  if (auto s = require(values != nullptr, "tlal_aggregate: null values")) return s;
  return wrap([&] {
    auto agg = tlal::eval::aggregate_values(std::vector<double>(values, values + n));
    if (mean) *mean = agg.mean_auc;
    if (ci_low) *ci_low = agg.ci_low;
    if (ci_high) *ci_high = agg.ci_high;
  });
}

tlal_status tlal_experiment_open(const char* config_json, tlal_experiment** out) {
  if (auto s = require(config_json && out, "tlal_experiment_open: null argument"))
    return s;
  *out = nullptr;
  return wrap([&] {
    auto exp = new tlal_experiment;
    try {
      exp->config = tlal::pipeline::ExperimentConfig::from_json(config_json);
    } catch (...) {
      delete exp;
      throw;
    }
    *out = exp;
  });
}

tlal_status tlal_experiment_open_file(const char* config_path, tlal_experiment** out) {
  if (auto s = require(config_path && out, "tlal_experiment_open_file: null argument"))
    return s;
  *out = nullptr;
  return wrap([&] {
    auto exp = new tlal_experiment;
    try {
      exp->config = tlal::pipeline::ExperimentConfig::from_file(config_path);
    } catch (...) {
      delete exp;
      throw;
    }
    *out = exp;
  });
}

tlal_status tlal_experiment_override(tlal_experiment* exp, const char* key,
                                     const char* value) {
  if (auto s = require(exp && key && value, "tlal_experiment_override: null argument"))
    return s;
  return wrap([&] {
    std::string k = key;
    if (k == "seed")
      exp->config.master_seed = std::stoull(value);
    else if (k == "output_dir")
      exp->config.output_dir = value;
    else if (k == "runs")
      exp->config.n_runs = std::stoull(value);
    else if (k == "allow_fetch")
      exp->config.allow_fetch = std::strcmp(value, "0") != 0;
    else
      tlal::fail(tlal::ErrorCode::configuration, "unknown override key '" + k + "'");
  });
}

const char* tlal_experiment_config(tlal_experiment* exp) {
  if (!exp) return "";
  exp->config_snapshot = exp->config.to_json();
  return exp->config_snapshot.c_str();
}

tlal_status tlal_experiment_run_stage(tlal_experiment* exp, const char* stage) {
  if (auto s = require(exp && stage, "tlal_experiment_run_stage: null argument")) return s;
  return wrap([&] {
    const auto& cfg = exp->config;
    cfg.validate();
    std::string name = stage;
    tlal::pipeline::DirLock lock(cfg.output_dir);
    if (name == "synth")
      tlal::pipeline::stage_synth(cfg);
    else if (name == "ingest")
      tlal::pipeline::stage_ingest(cfg);
    else if (name == "split")
      tlal::pipeline::stage_split(cfg);
    else if (name == "build")
      tlal::pipeline::stage_build(cfg);
    else if (name == "committee")
      tlal::pipeline::stage_committee(cfg);
    else if (name == "score")
      tlal::pipeline::stage_score(cfg);
    else if (name == "rank")
      tlal::pipeline::stage_rank(cfg);
    else if (name == "select")
      tlal::pipeline::stage_select(cfg);
    else if (name == "train")
      tlal::pipeline::stage_train(cfg);
    else if (name == "evaluate")
      tlal::pipeline::stage_evaluate(cfg);
    else if (name == "sweep")
      tlal::pipeline::stage_sweep(cfg);
    else
      tlal::fail(tlal::ErrorCode::configuration, "unknown stage '" + name + "'");
  });
}

tlal_status tlal_experiment_run(tlal_experiment* exp) {
  if (auto s = require(exp != nullptr, "tlal_experiment_run: null handle")) return s;
  return wrap([&] { tlal::pipeline::run_pipeline(exp->config); });
}

tlal_status tlal_experiment_report(tlal_experiment* exp, const char* kinds_csv) {
  if (auto s = require(exp != nullptr, "tlal_experiment_report: null handle")) return s;
  return wrap([&] {
    const auto& cfg = exp->config;
    std::set<std::string> kinds;
    if (kinds_csv && *kinds_csv) {
      std::stringstream ss(kinds_csv);
      std::string k;
      while (std::getline(ss, k, ','))
        if (!k.empty()) kinds.insert(k);
    } else {
      // emit whatever the existing artifacts support
      namespace fs = std::filesystem;
      fs::path out(cfg.output_dir);
      if (fs::exists(out / "ranking.tsv")) kinds.insert("distribution");
      if (fs::exists(out / "results.csv")) kinds.insert("comparison");
      if (fs::exists(out / "sweep_results.csv")) kinds.insert("sweep");
      if (fs::exists(out / "dataset" / "manifest.jsonl")) kinds.insert("tables");
      if (kinds.empty())
        tlal::fail(tlal::ErrorCode::report,
                   "no report inputs found in " + cfg.output_dir +
                       "; run the pipeline stages first");
    }
    tlal::pipeline::stage_report(cfg, kinds);
  });
}

void tlal_experiment_close(tlal_experiment* exp) { delete exp; }

tlal_status tlal_replay(const char* manifest_path, const char* out_dir,
                        int* selections_identical, double* max_auc_delta, int* ok) {
  if (auto s = require(manifest_path && out_dir, "tlal_replay: null argument")) return s;
  return wrap([&] {
    auto rep = tlal::pipeline::replay(manifest_path, out_dir);
    if (selections_identical) *selections_identical = rep.selections_identical ? 1 : 0;
    if (max_auc_delta) *max_auc_delta = rep.max_auc_delta;
    if (ok) *ok = rep.ok ? 1 : 0;
  });
}

}  // extern "C"
