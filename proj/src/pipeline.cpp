#include "tlal/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "tlal/nifti.hpp"
#include "tlal/reports.hpp"
#include "tlal/uncertainty.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace tlal::pipeline {

namespace {

std::string timestamp_utc() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::configuration, where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k))
      fail(ErrorCode::configuration, "unknown config key '" + k + "' in " + where);
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

fs::path P(const ExperimentConfig& cfg, const std::string& name) {
  return fs::path(cfg.output_dir) / name;
}

void need_artifact(const fs::path& p, const std::string& producer_stage) {
  if (!fs::exists(p))
    fail(ErrorCode::consistency, "missing artifact " + p.string() + "; run the '" +
                                     producer_stage + "' stage first");
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorCode::io, "cannot read " + p.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::io, "malformed JSON in " + p.string() + ": " + e.what());
  }
  return j;
}

void write_json_file(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) fail(ErrorCode::io, "cannot write " + p.string());
  out << j.dump(2) << "\n";
}

struct CohortEntry {
  std::string patient_id;
  data::Grade grade;
  std::string directory;
};

std::vector<CohortEntry> load_cohort_index(const ExperimentConfig& cfg) {
  fs::path p = P(cfg, "cohort_index.json");
  need_artifact(p, cfg.source == "synthetic" ? "synth" : "ingest");
  json j = read_json_file(p);
  std::vector<CohortEntry> entries;
  for (const auto& e : j.at("patients")) {
    entries.push_back({e.at("patient_id").get<std::string>(),
                       data::grade_from_string(e.at("grade").get<std::string>()),
                       e.at("directory").get<std::string>()});
  }
  if (entries.empty()) fail(ErrorCode::ingestion, "cohort index lists no patients");
  return entries;
}

data::CohortSplit load_split(const ExperimentConfig& cfg) {
  fs::path p = P(cfg, "split.json");
  need_artifact(p, "split");
  json j = read_json_file(p);
  data::CohortSplit s;
  for (const auto& id : j.at("train")) s.train_ids.insert(id.get<std::string>());
  for (const auto& id : j.at("val")) s.val_ids.insert(id.get<std::string>());
  for (const auto& id : j.at("test")) s.test_ids.insert(id.get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

data::DatasetBundle load_dataset(const ExperimentConfig& cfg) {
  fs::path p = P(cfg, "dataset");
  need_artifact(p / "manifest.jsonl", "build");
  return data::load_bundle(p.string());
}

std::set<std::string> load_initial_subset(const ExperimentConfig& cfg) {
  fs::path p = P(cfg, "initial_subset.json");
  need_artifact(p, "committee");
  json j = read_json_file(p);
  std::set<std::string> ids;
  for (const auto& id : j.at("ids")) ids.insert(id.get<std::string>());
  return ids;
}

uncertainty::UncertaintyRanking load_ranking_artifact(const ExperimentConfig& cfg) {
  fs::path p = P(cfg, "ranking.tsv");
  need_artifact(p, "rank");
  return uncertainty::load_ranking(p.string());
}

nn::Hyperparams finetune_hp(const ExperimentConfig& cfg, std::uint64_t seed) {
  nn::Hyperparams hp = cfg.hp;
  hp.seed = seed;
  return hp;
}

data::SliceDataset subset_of(const data::SliceDataset& pool,
                             const std::set<std::string>& ids) {
  data::SliceDataset out;
  out.variant = pool.variant;
  for (const auto& s : pool.samples)
    if (ids.count(s.sample_id)) out.samples.push_back(s);
  if (out.samples.size() != ids.size())
    fail(ErrorCode::consistency, "selection references sample ids outside the pool");
  return out;
}

std::vector<eval::RunResult> parse_results_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<eval::RunResult> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    eval::RunResult r;
    std::getline(ss, r.strategy, ',');
    std::getline(ss, field, ',');
    r.sample_fraction = std::stod(field);
    std::getline(ss, field, ',');
    r.seed = std::stoull(field);
    std::getline(ss, field, ',');
    r.val_auc = std::stod(field);
    std::getline(ss, field, ',');
    r.test_auc = std::stod(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<eval::AggregateResult> aggregate_by_strategy(
    const std::vector<eval::RunResult>& rows) {
  // group by (strategy, fraction), preserving first-seen order
  std::vector<std::pair<std::string, double>> keys;
  std::map<std::pair<std::string, double>, std::vector<eval::RunResult>> groups;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.strategy, r.sample_fraction);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(r);
  }
  std::vector<eval::AggregateResult> aggs;
  for (const auto& key : keys) aggs.push_back(eval::aggregate_runs(groups[key]));
  return aggs;
}

}  // namespace

// ---- config ----

void ExperimentConfig::validate() const {
  if (source != "synthetic" && source != "directory")
    fail(ErrorCode::configuration, "dataset.source must be 'synthetic' or 'directory'");
  if (source == "directory" && dataset_dir.empty())
    fail(ErrorCode::configuration, "dataset.directory required when source is 'directory'");
  if (source == "synthetic") {
    if (synth_hgg < 1 || synth_lgg < 1)
      fail(ErrorCode::configuration, "synthetic cohort needs patients of both grades");
    if (synth_hgg + synth_lgg != n_train + n_val + n_test)
      fail(ErrorCode::configuration,
           "synthetic cohort size " + std::to_string(synth_hgg + synth_lgg) +
               " does not match split sizes summing to " +
               std::to_string(n_train + n_val + n_test));
    if (synth.nx < 8 || synth.ny < 8 || synth.nz < 8)
      fail(ErrorCode::configuration, "synthetic volume dims must be >= 8");
    if (synth.outlier_rate < 0.0 || synth.outlier_rate >= 1.0)
      fail(ErrorCode::configuration, "synthetic outlier_rate must be in [0,1)");
  }
  if (n_train < 2 || n_val < 1 || n_test < 1)
    fail(ErrorCode::configuration, "split needs >= 2 train and >= 1 val/test patients");
  if (image_size < 8) fail(ErrorCode::configuration, "image_size must be >= 8");
  if (arch == nn::Arch::alexnet && image_size != 224)
    fail(ErrorCode::configuration, "the full backbone requires image_size 224");
  hp.validate();
  if (committee_learning_rates != committee::kLearningRates)
    fail(ErrorCode::configuration,
         "committee learning rates are fixed at {0.001, 0.0005, 0.0001}");
  if (initial_fraction <= 0.0 || initial_fraction > 1.0)
    fail(ErrorCode::configuration, "committee.initial_fraction must be in (0,1]");

  auto check_strategy = [](const std::string& s) {
    if (s != "proposed" && s != "random" && s != "range" && s != "baseline")
      fail(ErrorCode::configuration, "unknown strategy '" + s + "'");
  };
  check_strategy(strategy);
  if (discard_pct < 0.0 || discard_pct >= 50.0)
    fail(ErrorCode::configuration, "selection.discard_pct must be in [0,50)");
  if (sample_fraction <= 0.0 || sample_fraction > 1.0)
    fail(ErrorCode::configuration, "selection.sample_fraction must be in (0,1]");
  if (sample_fraction > (100.0 - 2.0 * discard_pct) / 100.0 + 1e-12)
    fail(ErrorCode::configuration,
         "sample_fraction exceeds the pool remaining after discarding the top and "
         "bottom " +
             std::to_string(discard_pct) + "%");
  if (range_lo < 0.0 || range_hi > 100.0 || range_lo >= range_hi)
    fail(ErrorCode::configuration, "selection range must satisfy 0 <= lo < hi <= 100");

  if (eval_strategies.empty())
    fail(ErrorCode::configuration, "evaluation.strategies must be non-empty");
  for (const auto& s : eval_strategies) check_strategy(s);
  if (n_runs < 2)
    fail(ErrorCode::configuration, "evaluation.n_runs must be >= 2 for CI aggregation");

  if (sweep_fractions.empty())
    fail(ErrorCode::configuration, "sweep.fractions must be non-empty");
  for (double f : sweep_fractions)
    if (f <= 0.0 || f > 0.8)
      fail(ErrorCode::configuration, "sweep fractions must lie in (0, 0.8]");
  for (const auto& s : sweep_strategies) check_strategy(s);

  if (output_dir.empty()) fail(ErrorCode::configuration, "output_dir must be set");
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["dataset"] = {
      {"source", source},
      {"directory", dataset_dir},
      {"variant", data::to_string(variant)},
      {"synthetic",
       {{"n_hgg", synth_hgg},
        {"n_lgg", synth_lgg},
        {"nx", synth.nx},
        {"ny", synth.ny},
        {"nz", synth.nz},
        {"noise_sigma", synth.noise_sigma},
        {"outlier_rate", synth.outlier_rate},
        {"hgg_intensity", synth.hgg_intensity},
        {"lgg_intensity", synth.lgg_intensity},
        {"intensity_sigma", synth.intensity_sigma}}},
  };
  j["split"] = {{"train", n_train}, {"val", n_val}, {"test", n_test}};
  j["model"] = {{"arch", nn::to_string(arch)},
                {"image_size", image_size},
                {"pretrained", hp.pretrained},
                {"weights_cache", weights_cache},
                {"allow_fetch", allow_fetch}};
  j["training"] = {{"learning_rate", hp.learning_rate},
                   {"batch_size", hp.batch_size},
                   {"max_epochs", hp.max_epochs},
                   {"momentum", hp.momentum},
                   {"l2_penalty", hp.l2_penalty}};
  j["committee"] = {{"learning_rates", committee_learning_rates},
                    {"initial_fraction", initial_fraction}};
  j["selection"] = {{"strategy", strategy},
                    {"discard_pct", discard_pct},
                    {"sample_fraction", sample_fraction},
                    {"range_lo", range_lo},
                    {"range_hi", range_hi}};
  j["evaluation"] = {{"strategies", eval_strategies},
                     {"n_runs", n_runs},
                     {"redraw_initial_subset", redraw_initial_subset}};
  j["sweep"] = {{"fractions", sweep_fractions}, {"strategies", sweep_strategies}};
  j["seed"] = master_seed;
  j["output_dir"] = output_dir;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::configuration, std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"dataset", "split", "model", "training", "committee", "selection",
                 "evaluation", "sweep", "seed", "output_dir"},
             "config root");
  ExperimentConfig cfg;
  try {
    if (j.contains("dataset")) {
      const json& d = j["dataset"];
      check_keys(d, {"source", "directory", "variant", "synthetic"}, "dataset");
      maybe(d, "source", cfg.source);
      maybe(d, "directory", cfg.dataset_dir);
      if (d.contains("variant"))
        cfg.variant = data::variant_from_string(d["variant"].get<std::string>());
      if (d.contains("synthetic")) {
        const json& s = d["synthetic"];
        check_keys(s,
                   {"n_hgg", "n_lgg", "nx", "ny", "nz", "noise_sigma", "outlier_rate",
                    "hgg_intensity", "lgg_intensity", "intensity_sigma"},
                   "dataset.synthetic");
        maybe(s, "n_hgg", cfg.synth_hgg);
        maybe(s, "n_lgg", cfg.synth_lgg);
        maybe(s, "nx", cfg.synth.nx);
        maybe(s, "ny", cfg.synth.ny);
        maybe(s, "nz", cfg.synth.nz);
        maybe(s, "noise_sigma", cfg.synth.noise_sigma);
        maybe(s, "outlier_rate", cfg.synth.outlier_rate);
        maybe(s, "hgg_intensity", cfg.synth.hgg_intensity);
        maybe(s, "lgg_intensity", cfg.synth.lgg_intensity);
        maybe(s, "intensity_sigma", cfg.synth.intensity_sigma);
      }
    }
    if (j.contains("split")) {
      const json& s = j["split"];
      check_keys(s, {"train", "val", "test"}, "split");
      maybe(s, "train", cfg.n_train);
      maybe(s, "val", cfg.n_val);
      maybe(s, "test", cfg.n_test);
    }
    if (j.contains("model")) {
      const json& m = j["model"];
      check_keys(m, {"arch", "image_size", "pretrained", "weights_cache", "allow_fetch"},
                 "model");
      if (m.contains("arch")) cfg.arch = nn::arch_from_string(m["arch"].get<std::string>());
      maybe(m, "image_size", cfg.image_size);
      maybe(m, "pretrained", cfg.hp.pretrained);
      maybe(m, "weights_cache", cfg.weights_cache);
      maybe(m, "allow_fetch", cfg.allow_fetch);
    }
    if (j.contains("training")) {
      const json& t = j["training"];
      check_keys(t, {"learning_rate", "batch_size", "max_epochs", "momentum", "l2_penalty"},
                 "training");
      maybe(t, "learning_rate", cfg.hp.learning_rate);
      maybe(t, "batch_size", cfg.hp.batch_size);
      maybe(t, "max_epochs", cfg.hp.max_epochs);
      maybe(t, "momentum", cfg.hp.momentum);
      maybe(t, "l2_penalty", cfg.hp.l2_penalty);
    }
    if (j.contains("committee")) {
      const json& c = j["committee"];
      check_keys(c, {"learning_rates", "initial_fraction"}, "committee");
      if (c.contains("learning_rates")) {
        auto rates = c["learning_rates"].get<std::vector<double>>();
        if (rates.size() != 3)
          fail(ErrorCode::configuration, "committee.learning_rates must list 3 rates");
        std::copy(rates.begin(), rates.end(), cfg.committee_learning_rates.begin());
      }
      maybe(c, "initial_fraction", cfg.initial_fraction);
    }
    if (j.contains("selection")) {
      const json& s = j["selection"];
      check_keys(s, {"strategy", "discard_pct", "sample_fraction", "range_lo", "range_hi"},
                 "selection");
      maybe(s, "strategy", cfg.strategy);
      maybe(s, "discard_pct", cfg.discard_pct);
      maybe(s, "sample_fraction", cfg.sample_fraction);
      maybe(s, "range_lo", cfg.range_lo);
      maybe(s, "range_hi", cfg.range_hi);
    }
    if (j.contains("evaluation")) {
      const json& e = j["evaluation"];
      check_keys(e, {"strategies", "n_runs", "redraw_initial_subset"}, "evaluation");
      maybe(e, "strategies", cfg.eval_strategies);
      maybe(e, "n_runs", cfg.n_runs);
      maybe(e, "redraw_initial_subset", cfg.redraw_initial_subset);
    }
    if (j.contains("sweep")) {
      const json& s = j["sweep"];
      check_keys(s, {"fractions", "strategies"}, "sweep");
      maybe(s, "fractions", cfg.sweep_fractions);
      maybe(s, "strategies", cfg.sweep_strategies);
    }
    maybe(j, "seed", cfg.master_seed);
    maybe(j, "output_dir", cfg.output_dir);
  } catch (const json::exception& e) {
    fail(ErrorCode::configuration, std::string("config field has wrong type: ") + e.what());
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

// ---- manifest ----

void save_manifest(const RunManifest& m, const std::string& path) {
  json j;
  j["tool_version"] = m.tool_version;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["config"] = json::parse(m.config_json);
  j["derived_seeds"] = m.derived_seeds;
  j["artifacts"] = m.artifacts;
  write_json_file(path, j);
}

RunManifest load_manifest(const std::string& path) {
  json j = read_json_file(path);
  RunManifest m;
  try {
    m.tool_version = j.at("tool_version").get<std::string>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
    m.config_json = j.at("config").dump();
    m.derived_seeds = j.at("derived_seeds").get<std::map<std::string, std::uint64_t>>();
    m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::io, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

// ---- directory lock ----

DirLock::DirLock(const std::string& dir) {
  fs::create_directories(dir);
  path_ = (fs::path(dir) / ".lock").string();
  int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    fail(ErrorCode::resource,
         "output directory is locked (" + path_ +
             "); another run may be active — remove the lock file if it is stale");
  }
  std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] ssize_t n = ::write(fd, pid.c_str(), pid.size());
  ::close(fd);
}

DirLock::~DirLock() { ::unlink(path_.c_str()); }

// ---- stages ----

void stage_synth(const ExperimentConfig& cfg) {
  if (cfg.source != "synthetic")
    fail(ErrorCode::configuration, "synth stage requires dataset.source = 'synthetic'");
  fs::create_directories(cfg.output_dir);
  std::uint64_t seed = derive_seed(cfg.master_seed, "synth");
  auto cohort = data::generate_synthetic_cohort(cfg.synth_hgg, cfg.synth_lgg, cfg.synth, seed);

  json index;
  index["source"] = "synthetic";
  index["seed"] = seed;
  index["patients"] = json::array();
  for (const auto& [pid, scan] : cohort) {
    fs::path dir = P(cfg, "cohort") / data::to_string(scan.grade) / pid;
    fs::create_directories(dir);
    for (const auto& [mod, vol] : scan.volumes)
      nifti::write((dir / (pid + "_" + mod + ".nii.gz")).string(), vol);
    nifti::write((dir / (pid + "_seg.nii.gz")).string(), scan.tumor_mask);
    index["patients"].push_back({{"patient_id", pid},
                                 {"grade", data::to_string(scan.grade)},
                                 {"directory", dir.string()}});
  }
  write_json_file(P(cfg, "cohort_index.json"), index);
}

void stage_ingest(const ExperimentConfig& cfg) {
  if (cfg.source != "directory")
    fail(ErrorCode::configuration, "ingest stage requires dataset.source = 'directory'");
  fs::create_directories(cfg.output_dir);
  json index;
  index["source"] = "directory";
  index["patients"] = json::array();
  std::size_t found = 0;
  for (const auto& grade_name : {"HGG", "LGG"}) {
    fs::path gdir = fs::path(cfg.dataset_dir) / grade_name;
    if (!fs::is_directory(gdir)) continue;
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(gdir))
      if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      index["patients"].push_back({{"patient_id", d.filename().string()},
                                   {"grade", grade_name},
                                   {"directory", d.string()}});
      ++found;
    }
  }
  if (found == 0)
    fail(ErrorCode::ingestion,
         "no patient directories under " + cfg.dataset_dir +
             "/{HGG,LGG}; expected the grade-grouped release layout");
  write_json_file(P(cfg, "cohort_index.json"), index);
}

void stage_split(const ExperimentConfig& cfg) {
  auto index = load_cohort_index(cfg);
  std::vector<std::pair<std::string, data::Grade>> patients;
  for (const auto& e : index) patients.emplace_back(e.patient_id, e.grade);
  std::uint64_t seed = derive_seed(cfg.master_seed, "split");
  auto split = data::split_cohort(patients, cfg.n_train, cfg.n_val, cfg.n_test, seed);

  json j;
  j["seed"] = seed;
  j["train"] = split.train_ids;
  j["val"] = split.val_ids;
  j["test"] = split.test_ids;
  write_json_file(P(cfg, "split.json"), j);
}

void stage_build(const ExperimentConfig& cfg) {
  auto index = load_cohort_index(cfg);
  auto split = load_split(cfg);

  std::set<std::string> wanted;
  for (const auto& s : {&split.train_ids, &split.val_ids, &split.test_ids})
    wanted.insert(s->begin(), s->end());

  std::map<std::string, data::PatientScan> scans;
  for (const auto& e : index) {
    if (!wanted.count(e.patient_id)) continue;
    scans[e.patient_id] = data::ingest_patient(e.directory, e.patient_id, e.grade);
  }

  data::ExtractParams params;
  params.out_size = cfg.image_size;
  auto bundle = data::build_dataset(split, scans, cfg.variant,
                                    derive_seed(cfg.master_seed, "build"), params);
  fs::path out = P(cfg, "dataset");
  fs::create_directories(out);
  data::save_bundle(bundle, out.string());
}

void stage_committee(const ExperimentConfig& cfg) {
  auto bundle = load_dataset(cfg);
  std::uint64_t subset_seed = derive_seed(cfg.master_seed, "initial-subset");
  auto ids = committee::draw_initial_labeled_subset(bundle.train, cfg.initial_fraction,
                                                    subset_seed);
  json j;
  j["fraction"] = cfg.initial_fraction;
  j["seed"] = subset_seed;
  j["ids"] = ids;
  write_json_file(P(cfg, "initial_subset.json"), j);

  nn::Hyperparams base = finetune_hp(cfg, derive_seed(cfg.master_seed, "committee"));
  auto com = committee::train_committee(bundle.train, ids, bundle.val, base, cfg.arch,
                                        cfg.image_size, cfg.weights_cache, cfg.allow_fetch);
  fs::path dir = P(cfg, "committee");
  fs::create_directories(dir);
  for (std::size_t m = 0; m < com.members.size(); ++m) {
    std::string stem = "member_" + std::to_string(m);
    nn::save_checkpoint(com.members[m], (dir / (stem + ".ckpt")).string());
    nn::export_training_log(com.members[m], (dir / (stem + "_log.csv")).string());
  }
}

namespace {

committee::Committee load_committee(const ExperimentConfig& cfg) {
  committee::Committee com;
  fs::path dir = P(cfg, "committee");
  for (std::size_t m = 0; m < 3; ++m) {
    fs::path ckpt = dir / ("member_" + std::to_string(m) + ".ckpt");
    need_artifact(ckpt, "committee");
    com.members.push_back(nn::load_checkpoint(ckpt.string()));
  }
  com.labeled_subset_ids = load_initial_subset(cfg);
  return com;
}

}  // namespace

void stage_score(const ExperimentConfig& cfg) {
  auto bundle = load_dataset(cfg);
  auto com = load_committee(cfg);
  auto tensor = committee::score_pool(com, bundle.train);
  committee::save_tensor(tensor, P(cfg, "tensor.csv").string());
}

void stage_rank(const ExperimentConfig& cfg) {
  fs::path tpath = P(cfg, "tensor.csv");
  need_artifact(tpath, "score");
  auto tensor = committee::load_tensor(tpath.string());
  std::map<std::string, uncertainty::ScoreParts> scores;
  for (std::size_t i = 0; i < tensor.sample_ids.size(); ++i) {
    std::vector<uncertainty::Dist> member_probs(tensor.probs[i].begin(),
                                                tensor.probs[i].end());
    scores[tensor.sample_ids[i]] = uncertainty::uncertainty_score(member_probs);
  }
  auto ranking = uncertainty::rank_pool(scores);
  uncertainty::save_ranking(ranking, P(cfg, "ranking.tsv").string());
}

namespace {

selection::SelectionResult select_with(const ExperimentConfig& cfg,
                                       const std::string& strategy, double fraction,
                                       std::uint64_t seed,
                                       const uncertainty::UncertaintyRanking* ranking,
                                       const std::vector<std::string>& pool_ids) {
  if (strategy == "proposed") {
    if (!ranking) fail(ErrorCode::consistency, "proposed selection needs a ranking");
    return selection::select_proposed(*ranking, cfg.discard_pct, fraction, seed);
  }
  if (strategy == "range") {
    if (!ranking) fail(ErrorCode::consistency, "range selection needs a ranking");
    return selection::select_range(*ranking, cfg.range_lo, cfg.range_hi);
  }
  if (strategy == "random") return selection::select_random(pool_ids, fraction, seed);
  // baseline: the whole pool
  selection::SelectionResult r;
  r.strategy = selection::Strategy::random;
  r.selected_ids.insert(pool_ids.begin(), pool_ids.end());
  r.parameters["fraction"] = 1.0;
  return r;
}

void attach_cost(selection::SelectionResult& r, const std::set<std::string>& initial,
                 std::size_t pool_size) {
  auto cost = selection::labeling_cost(initial, r.selected_ids, pool_size);
  r.newly_labeled_count = cost.newly_labeled;
  r.total_label_fraction = cost.total_fraction;
}

}  // namespace

selection::SelectionResult stage_select(const ExperimentConfig& cfg) {
  auto bundle = load_dataset(cfg);
  auto pool_ids = bundle.train.sample_ids();
  uncertainty::UncertaintyRanking ranking;
  const uncertainty::UncertaintyRanking* rk = nullptr;
  if (cfg.strategy == "proposed" || cfg.strategy == "range") {
    ranking = load_ranking_artifact(cfg);
    rk = &ranking;
  }
  std::uint64_t seed = derive_seed(cfg.master_seed, "select");
  auto r = select_with(cfg, cfg.strategy, cfg.sample_fraction, seed, rk, pool_ids);
  if (fs::exists(P(cfg, "initial_subset.json")))
    attach_cost(r, load_initial_subset(cfg), pool_ids.size());
  selection::save_selection(r, P(cfg, "selection.json").string());
  return r;
}

void stage_train(const ExperimentConfig& cfg) {
  auto bundle = load_dataset(cfg);
  fs::path sel_path = P(cfg, "selection.json");
  need_artifact(sel_path, "select");
  auto sel = selection::load_selection(sel_path.string());
  auto train_set = subset_of(bundle.train, sel.selected_ids);

  std::uint64_t seed = derive_seed(cfg.master_seed, "train");
  auto model = nn::build_model(cfg.arch, cfg.image_size, cfg.hp.pretrained, seed,
                               cfg.weights_cache, cfg.allow_fetch);
  auto tm = nn::finetune(model, train_set, bundle.val, finetune_hp(cfg, seed));
  nn::save_checkpoint(tm, P(cfg, "model.ckpt").string());
  nn::export_training_log(tm, P(cfg, "train_log.csv").string());
  // Reusable backbone weights: drop this file into a weights cache (named
  // <arch>_pretrained.bin) to seed transfer learning in another experiment.
  nn::save_weights_file(*tm.model, P(cfg, "backbone_weights.bin").string());
}

namespace {

// One select->finetune->evaluate pass over the shared artifacts.
eval::RunResult run_once(const ExperimentConfig& cfg, const data::DatasetBundle& bundle,
                         const std::set<std::string>& initial_ids,
                         const uncertainty::UncertaintyRanking* ranking,
                         const std::string& strategy, double fraction, std::uint64_t seed,
                         const std::string& selection_path) {
  auto pool_ids = bundle.train.sample_ids();
  auto sel = select_with(cfg, strategy, fraction, seed, ranking, pool_ids);
  attach_cost(sel, initial_ids, pool_ids.size());
  if (!selection_path.empty()) selection::save_selection(sel, selection_path);

  auto train_set = subset_of(bundle.train, sel.selected_ids);
  auto model = nn::build_model(cfg.arch, cfg.image_size, cfg.hp.pretrained, seed,
                               cfg.weights_cache, cfg.allow_fetch);
  auto tm = nn::finetune(model, train_set, bundle.val, finetune_hp(cfg, seed));

  std::vector<double> scores = nn::predict_scores(tm, bundle.test.samples);
  std::vector<int> labels;
  labels.reserve(bundle.test.samples.size());
  for (const auto& s : bundle.test.samples) labels.push_back(s.label);

  eval::RunResult r;
  r.strategy = strategy == "range"
                   ? "range[" + std::to_string(static_cast<int>(cfg.range_lo)) + "-" +
                         std::to_string(static_cast<int>(cfg.range_hi)) + "]"
                   : strategy;
  r.sample_fraction = fraction;
  r.seed = seed;
  r.val_auc = tm.best_val_auc;
  r.test_auc = eval::auc(scores, labels);
  return r;
}

struct EvalContext {
  data::DatasetBundle bundle;
  std::set<std::string> initial_ids;
  uncertainty::UncertaintyRanking ranking;
  bool has_ranking = false;
};

EvalContext load_eval_context(const ExperimentConfig& cfg, bool needs_ranking) {
  EvalContext ctx;
  ctx.bundle = load_dataset(cfg);
  ctx.initial_ids = load_initial_subset(cfg);
  if (needs_ranking) {
    ctx.ranking = load_ranking_artifact(cfg);
    ctx.has_ranking = true;
  }
  return ctx;
}

bool any_needs_ranking(const std::vector<std::string>& strategies) {
  return std::any_of(strategies.begin(), strategies.end(), [](const std::string& s) {
    return s == "proposed" || s == "range";
  });
}

// Re-draws the initial subset and retrains the committee for one run; used
// when evaluation.redraw_initial_subset is set.
void redraw_context(const ExperimentConfig& cfg, EvalContext& ctx, std::uint64_t seed) {
  ctx.initial_ids = committee::draw_initial_labeled_subset(
      ctx.bundle.train, cfg.initial_fraction, derive_seed(seed, "redraw-initial"));
  nn::Hyperparams base = finetune_hp(cfg, derive_seed(seed, "redraw-committee"));
  auto com =
      committee::train_committee(ctx.bundle.train, ctx.initial_ids, ctx.bundle.val, base,
                                 cfg.arch, cfg.image_size, cfg.weights_cache, cfg.allow_fetch);
  auto tensor = committee::score_pool(com, ctx.bundle.train);
  std::map<std::string, uncertainty::ScoreParts> scores;
  for (std::size_t i = 0; i < tensor.sample_ids.size(); ++i) {
    std::vector<uncertainty::Dist> member_probs(tensor.probs[i].begin(),
                                                tensor.probs[i].end());
    scores[tensor.sample_ids[i]] = uncertainty::uncertainty_score(member_probs);
  }
  ctx.ranking = uncertainty::rank_pool(scores);
  ctx.has_ranking = true;
}

}  // namespace

std::vector<eval::AggregateResult> stage_evaluate(const ExperimentConfig& cfg) {
  EvalContext ctx = load_eval_context(
      cfg, !cfg.redraw_initial_subset && any_needs_ranking(cfg.eval_strategies));

  fs::path results = P(cfg, "results.csv");
  fs::remove(results);
  fs::create_directories(P(cfg, "selections"));

  std::vector<eval::RunResult> rows;
  for (const auto& strategy : cfg.eval_strategies) {
    for (std::size_t r = 0; r < cfg.n_runs; ++r) {
      std::uint64_t seed = derive_seed(cfg.master_seed, "evaluate:" + strategy, r);
      if (cfg.redraw_initial_subset) redraw_context(cfg, ctx, seed);
      double fraction = strategy == "baseline" ? 1.0 : cfg.sample_fraction;
      char name[128];
      std::snprintf(name, sizeof(name), "%s_run%03zu.json", strategy.c_str(), r);
      auto t0 = std::chrono::steady_clock::now();
      auto rr = run_once(cfg, ctx.bundle, ctx.initial_ids,
                         ctx.has_ranking ? &ctx.ranking : nullptr, strategy, fraction,
                         seed, (P(cfg, "selections") / name).string());
      double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      eval::append_run_csv(results.string(), rr, wall);
      rows.push_back(std::move(rr));
    }
  }

  auto aggs = aggregate_by_strategy(rows);
  reports::write_summary_table(aggs, P(cfg, "summary").string());
  return aggs;
}

std::vector<eval::AggregateResult> stage_sweep(const ExperimentConfig& cfg) {
  EvalContext ctx = load_eval_context(cfg, any_needs_ranking(cfg.sweep_strategies));

  fs::path results = P(cfg, "sweep_results.csv");
  fs::remove(results);

  auto run = [&](const std::string& strategy, double fraction,
                 std::uint64_t seed) -> eval::RunResult {
    auto t0 = std::chrono::steady_clock::now();
    auto rr = run_once(cfg, ctx.bundle, ctx.initial_ids,
                       ctx.has_ranking ? &ctx.ranking : nullptr, strategy, fraction, seed,
                       "");
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    eval::append_run_csv(results.string(), rr, wall);
    return rr;
  };
  auto aggs = eval::sweep_sample_size(cfg.sweep_fractions, cfg.sweep_strategies, cfg.n_runs,
                                      cfg.master_seed, run);
  reports::write_summary_table(aggs, P(cfg, "sweep_summary").string());
  return aggs;
}

void stage_report(const ExperimentConfig& cfg, const std::set<std::string>& kinds) {
  const std::set<std::string> known = {"distribution", "comparison", "sweep", "range",
                                       "tables"};
  for (const auto& k : kinds)
    if (!known.count(k)) fail(ErrorCode::report, "unknown report kind '" + k + "'");

  fs::path dir = P(cfg, "reports");
  fs::create_directories(dir);

  if (kinds.count("distribution")) {
    if (!fs::exists(P(cfg, "ranking.tsv")))
      fail(ErrorCode::report, "distribution report needs ranking.tsv; run 'rank' first");
    auto ranking = uncertainty::load_ranking(P(cfg, "ranking.tsv").string());
    reports::uncertainty_distribution_plots(ranking, dir.string());
  }
  if (kinds.count("comparison")) {
    if (!fs::exists(P(cfg, "results.csv")))
      fail(ErrorCode::report, "comparison report needs results.csv; run 'evaluate' first");
    auto aggs = aggregate_by_strategy(parse_results_csv(P(cfg, "results.csv")));
    reports::comparison_chart(aggs, (dir / "comparison").string());
    reports::write_summary_table(aggs, (dir / "comparison_table").string());
  }
  if (kinds.count("sweep")) {
    if (!fs::exists(P(cfg, "sweep_results.csv")))
      fail(ErrorCode::report, "sweep report needs sweep_results.csv; run 'sweep' first");
    auto aggs = aggregate_by_strategy(parse_results_csv(P(cfg, "sweep_results.csv")));
    double baseline = 0.0;
    bool have_baseline = false;
    if (fs::exists(P(cfg, "results.csv"))) {
      std::vector<double> vals;
      for (const auto& r : parse_results_csv(P(cfg, "results.csv")))
        if (r.strategy == "baseline") vals.push_back(r.test_auc);
      if (!vals.empty()) {
        baseline = 0.0;
        for (double v : vals) baseline += v;
        baseline /= static_cast<double>(vals.size());
        have_baseline = true;
      }
    }
    reports::sweep_chart(aggs, baseline, have_baseline, (dir / "sweep").string());
  }
  if (kinds.count("range")) {
    if (!fs::exists(P(cfg, "results.csv")))
      fail(ErrorCode::report, "range report needs results.csv; run 'evaluate' with the "
                              "range strategy first");
    auto aggs = aggregate_by_strategy(parse_results_csv(P(cfg, "results.csv")));
    std::vector<std::pair<std::string, double>> windows;
    for (const auto& a : aggs)
      if (a.strategy.rfind("range", 0) == 0) windows.emplace_back(a.strategy, a.mean_auc);
    if (windows.empty())
      fail(ErrorCode::report,
           "range report needs range-strategy runs; run 'evaluate' with the range "
           "strategy first");
    reports::range_chart(windows, (dir / "range").string());
  }
  if (kinds.count("tables")) {
    if (!fs::exists(P(cfg, "dataset") / "manifest.jsonl"))
      fail(ErrorCode::report, "tables report needs the dataset; run 'build' first");
    auto bundle = load_dataset(cfg);
    reports::write_sample_count_table(bundle.train.samples.size(),
                                      (dir / "sample_counts").string());
  }
}

// ---- full pipeline + replay ----

RunManifest run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  DirLock lock(cfg.output_dir);

  RunManifest m;
  m.config_json = cfg.to_json();
  m.started_at = timestamp_utc();

  auto run_stage = [&](const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      fail(e.code(), "stage '" + name + "' failed: " + e.what() +
                         " | partial artifacts retained in " + cfg.output_dir +
                         "; fix the cause and rerun `tlal " + name +
                         "` (same config and seed) to resume");
    }
  };

  if (cfg.source == "synthetic") {
    run_stage("synth", [&] { stage_synth(cfg); });
    m.derived_seeds["synth"] = derive_seed(cfg.master_seed, "synth");
  } else {
    run_stage("ingest", [&] { stage_ingest(cfg); });
  }
  run_stage("split", [&] { stage_split(cfg); });
  m.derived_seeds["split"] = derive_seed(cfg.master_seed, "split");
  run_stage("build", [&] { stage_build(cfg); });
  m.derived_seeds["build"] = derive_seed(cfg.master_seed, "build");
  run_stage("committee", [&] { stage_committee(cfg); });
  m.derived_seeds["initial-subset"] = derive_seed(cfg.master_seed, "initial-subset");
  m.derived_seeds["committee"] = derive_seed(cfg.master_seed, "committee");
  run_stage("score", [&] { stage_score(cfg); });
  run_stage("rank", [&] { stage_rank(cfg); });
  run_stage("select", [&] { stage_select(cfg); });
  m.derived_seeds["select"] = derive_seed(cfg.master_seed, "select");
  run_stage("train", [&] { stage_train(cfg); });
  m.derived_seeds["train"] = derive_seed(cfg.master_seed, "train");
  run_stage("evaluate", [&] { stage_evaluate(cfg); });
  for (const auto& s : cfg.eval_strategies)
    for (std::size_t r = 0; r < cfg.n_runs; ++r)
      m.derived_seeds["evaluate:" + s + ":" + std::to_string(r)] =
          derive_seed(cfg.master_seed, "evaluate:" + s, r);
  run_stage("report", [&] { stage_report(cfg, {"distribution", "comparison", "tables"}); });

  m.artifacts["cohort_index"] = P(cfg, "cohort_index.json").string();
  m.artifacts["split"] = P(cfg, "split.json").string();
  m.artifacts["dataset_manifest"] = (P(cfg, "dataset") / "manifest.jsonl").string();
  m.artifacts["initial_subset"] = P(cfg, "initial_subset.json").string();
  for (int i = 0; i < 3; ++i)
    m.artifacts["committee_member_" + std::to_string(i)] =
        (P(cfg, "committee") / ("member_" + std::to_string(i) + ".ckpt")).string();
  m.artifacts["probability_tensor"] = P(cfg, "tensor.csv").string();
  m.artifacts["ranking"] = P(cfg, "ranking.tsv").string();
  m.artifacts["selection"] = P(cfg, "selection.json").string();
  m.artifacts["selections_dir"] = P(cfg, "selections").string();
  m.artifacts["model"] = P(cfg, "model.ckpt").string();
  m.artifacts["results_csv"] = P(cfg, "results.csv").string();
  m.artifacts["summary"] = P(cfg, "summary.csv").string();
  m.artifacts["reports_dir"] = P(cfg, "reports").string();

  m.finished_at = timestamp_utc();
  std::string manifest_path = P(cfg, "manifest.json").string();
  save_manifest(m, manifest_path);
  m.artifacts["manifest"] = manifest_path;
  return m;
}

ReplayReport replay(const std::string& manifest_path, const std::string& replay_out_dir) {
  RunManifest orig = load_manifest(manifest_path);
  ExperimentConfig cfg = ExperimentConfig::from_json(orig.config_json);
  std::string orig_out = cfg.output_dir;
  bool same_dir = orig_out == replay_out_dir;
  if (!same_dir && fs::exists(orig_out) && fs::exists(replay_out_dir))
    same_dir = fs::equivalent(fs::path(orig_out), fs::path(replay_out_dir));
  if (same_dir)
    fail(ErrorCode::configuration, "replay output directory must differ from the original");
  cfg.output_dir = replay_out_dir;
  run_pipeline(cfg);

  ReplayReport rep;
  rep.selections_identical = true;

  auto compare_selection = [&](const fs::path& a, const fs::path& b) {
    if (!fs::exists(a) || !fs::exists(b)) {
      rep.selections_identical = false;
      return;
    }
    auto sa = selection::load_selection(a.string());
    auto sb = selection::load_selection(b.string());
    if (sa.selected_ids != sb.selected_ids) rep.selections_identical = false;
  };
  compare_selection(fs::path(orig_out) / "selection.json",
                    fs::path(replay_out_dir) / "selection.json");
  fs::path orig_sel = fs::path(orig_out) / "selections";
  if (fs::is_directory(orig_sel)) {
    for (const auto& e : fs::directory_iterator(orig_sel))
      compare_selection(e.path(), fs::path(replay_out_dir) / "selections" /
                                      e.path().filename());
  }

  auto orig_rows = parse_results_csv(fs::path(orig_out) / "results.csv");
  auto new_rows = parse_results_csv(fs::path(replay_out_dir) / "results.csv");
  std::map<std::tuple<std::string, double, std::uint64_t>, eval::RunResult> by_key;
  for (const auto& r : new_rows) by_key[{r.strategy, r.sample_fraction, r.seed}] = r;
  for (const auto& r : orig_rows) {
    auto it = by_key.find({r.strategy, r.sample_fraction, r.seed});
    if (it == by_key.end()) {
      rep.max_auc_delta = std::numeric_limits<double>::infinity();
      continue;
    }
    rep.max_auc_delta = std::max(rep.max_auc_delta,
                                 std::abs(r.val_auc - it->second.val_auc));
    rep.max_auc_delta = std::max(rep.max_auc_delta,
                                 std::abs(r.test_auc - it->second.test_auc));
  }

  rep.ok = rep.selections_identical && rep.max_auc_delta <= 1e-6;
  json j;
  j["selections_identical"] = rep.selections_identical;
  j["max_auc_delta"] = rep.max_auc_delta;
  j["ok"] = rep.ok;
  j["original_manifest"] = manifest_path;
  write_json_file(fs::path(replay_out_dir) / "replay_report.json", j);
  return rep;
}

}  // namespace tlal::pipeline
