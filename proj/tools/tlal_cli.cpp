// Command-line front end over the shared C API. Every subcommand runs one
// pipeline stage against the config's output directory, so a full experiment
// can be driven either by `run` or stage by stage.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tlal/tlal.h"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string seed;
  std::string out;
  std::string runs;
  bool no_fetch = false;
  bool allow_fetch = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool config_required = true) {
  auto* c = cmd->add_option("-c,--config", o.config_path, "experiment config (JSON)");
  if (config_required) c->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "override the master seed");
  cmd->add_option("-o,--out", o.out, "override the output directory");
  cmd->add_option("--runs", o.runs, "override the repeat-run count");
  cmd->add_flag("--no-fetch", o.no_fetch, "forbid network fetches (default)");
  cmd->add_flag("--allow-fetch", o.allow_fetch, "permit fetching pretrained weights");
}

int fail_status(tlal_status s) {
  std::fprintf(stderr, "error (%d): %s\n", static_cast<int>(s), tlal_last_error());
  return static_cast<int>(s);
}

// Opens the experiment handle and applies CLI overrides; nullptr on failure.
tlal_experiment* open_experiment(const CommonOpts& o, int& rc) {
  tlal_experiment* exp = nullptr;
  tlal_status s = tlal_experiment_open_file(o.config_path.c_str(), &exp);
  if (s != TLAL_OK) {
    rc = fail_status(s);
    return nullptr;
  }
  auto apply = [&](const char* key, const std::string& value) {
    if (s == TLAL_OK && !value.empty())
      s = tlal_experiment_override(exp, key, value.c_str());
  };
  apply("seed", o.seed);
  apply("output_dir", o.out);
  apply("runs", o.runs);
  if (s == TLAL_OK && o.allow_fetch && !o.no_fetch)
    s = tlal_experiment_override(exp, "allow_fetch", "1");
  if (s != TLAL_OK) {
    rc = fail_status(s);
    tlal_experiment_close(exp);
    return nullptr;
  }
  rc = 0;
  return exp;
}

int run_stage(const CommonOpts& o, const std::string& stage) {
  int rc = 0;
  tlal_experiment* exp = open_experiment(o, rc);
  if (!exp) return rc;
  tlal_status s = tlal_experiment_run_stage(exp, stage.c_str());
  if (s != TLAL_OK)
    rc = fail_status(s);
  else
    std::printf("%s: done\n", stage.c_str());
  tlal_experiment_close(exp);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transfer-learning active-learning experiment runner"};
  app.set_version_flag("--version", std::string(tlal_version()));
  app.require_subcommand(1);

  struct StageCmd {
    const char* name;
    const char* help;
  };
  const std::vector<StageCmd> stages = {
      {"ingest", "index a grade-grouped scan directory"},
      {"synth", "generate and persist a synthetic cohort"},
      {"split", "stratified patient-level train/val/test split"},
      {"build", "extract, normalize and bundle slice datasets"},
      {"committee", "draw the initial labeled subset and train the 3-member committee"},
      {"score", "committee probabilities for every pool sample"},
      {"rank", "entropy+disagreement scores and pool ranking"},
      {"select", "apply the configured selection strategy"},
      {"train", "finetune a model on the current selection"},
      {"evaluate", "repeat-run evaluation with CI aggregation"},
      {"sweep", "sample-size sweep across fractions and strategies"},
  };
  std::vector<CommonOpts> opts(stages.size());
  for (std::size_t i = 0; i < stages.size(); ++i) {
    auto* cmd = app.add_subcommand(stages[i].name, stages[i].help);
    add_common(cmd, opts[i]);
    cmd->callback([&, i] { std::exit(run_stage(opts[i], stages[i].name)); });
  }

  CommonOpts run_opts;
  auto* run_cmd = app.add_subcommand("run", "full pipeline end to end");
  add_common(run_cmd, run_opts);
  run_cmd->callback([&] {
    int rc = 0;
    tlal_experiment* exp = open_experiment(run_opts, rc);
    if (!exp) std::exit(rc);
    tlal_status s = tlal_experiment_run(exp);
    if (s != TLAL_OK)
      rc = fail_status(s);
    else
      std::printf("run: done (manifest.json written)\n");
    tlal_experiment_close(exp);
    std::exit(rc);
  });

  CommonOpts report_opts;
  std::vector<std::string> kinds;
  auto* report_cmd = app.add_subcommand("report", "emit figure and table analogues");
  add_common(report_cmd, report_opts);
  report_cmd->add_option("-k,--kind", kinds,
                         "report kind: distribution|comparison|sweep|range|tables "
                         "(repeatable; default: all with available inputs)");
  report_cmd->callback([&] {
    int rc = 0;
    tlal_experiment* exp = open_experiment(report_opts, rc);
    if (!exp) std::exit(rc);
    std::string csv;
    for (const auto& k : kinds) csv += (csv.empty() ? "" : ",") + k;
    tlal_status s = tlal_experiment_report(exp, csv.c_str());
    if (s != TLAL_OK)
      rc = fail_status(s);
    else
      std::printf("report: done\n");
    tlal_experiment_close(exp);
    std::exit(rc);
  });

  std::string manifest_path, replay_out;
  auto* replay_cmd =
      app.add_subcommand("replay", "re-run a recorded experiment and verify determinism");
  replay_cmd->add_option("-m,--manifest", manifest_path, "manifest.json of the original run")
      ->required()
      ->check(CLI::ExistingFile);
  replay_cmd->add_option("-o,--out", replay_out, "output directory for the replay")
      ->required();
  replay_cmd->callback([&] {
    int identical = 0, ok = 0;
    double delta = 0.0;
    tlal_status s = tlal_replay(manifest_path.c_str(), replay_out.c_str(), &identical,
                                &delta, &ok);
    if (s != TLAL_OK) std::exit(fail_status(s));
    std::printf("replay: selections %s, max AUC delta %.3g -> %s\n",
                identical ? "identical" : "DIFFER", delta, ok ? "OK" : "MISMATCH");
    std::exit(ok ? 0 : 1);
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}
