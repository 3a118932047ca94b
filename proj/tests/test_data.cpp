#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "tlal/data.hpp"

namespace fs = std::filesystem;
using namespace tlal;
using namespace tlal::data;

namespace {

SyntheticParams small_params() {
  SyntheticParams p;
  p.nx = 32;
  p.ny = 32;
  p.nz = 48;
  return p;
}

// Write a synthetic patient to disk in the release layout for ingestion tests.
std::string write_patient_dir(const PatientScan& scan, const fs::path& root,
                              bool skip_t2 = false, bool empty_seg = false) {
  fs::path dir = root / scan.patient_id;
  fs::create_directories(dir);
  for (const auto& [mod, vol] : scan.volumes) {
    if (skip_t2 && mod == "t2") continue;
    nifti::write((dir / (scan.patient_id + "_" + mod + ".nii.gz")).string(), vol);
  }
  nifti::Volume seg = scan.tumor_mask;
  if (empty_seg)
    for (auto& v : seg.data) v = 0.0f;
  nifti::write((dir / (scan.patient_id + "_seg.nii.gz")).string(), seg);
  return dir.string();
}

}  // namespace

TEST_CASE("nifti round trip incl. gzip") {
  nifti::Volume vol;
  vol.dims = {5, 7, 3};
  vol.data.resize(vol.size());
  for (std::size_t i = 0; i < vol.data.size(); ++i) vol.data[i] = 0.25f * i;
  nifti::write("rt.nii", vol);
  auto back = nifti::read("rt.nii");
  CHECK(back.dims == vol.dims);
  CHECK(back.data == vol.data);
  nifti::write("rt.nii.gz", vol);
  auto gz = nifti::read("rt.nii.gz");
  CHECK(gz.data == vol.data);
  fs::remove("rt.nii");
  fs::remove("rt.nii.gz");
}

TEST_CASE("generate_synthetic_cohort counts and determinism") {
  auto cohort = generate_synthetic_cohort(30, 10, small_params(), 7);
  CHECK(cohort.size() == 40);
  std::size_t hgg = 0;
  for (const auto& [id, scan] : cohort)
    if (scan.grade == Grade::HGG) ++hgg;
  CHECK(hgg == 30);

  auto again = generate_synthetic_cohort(30, 10, small_params(), 7);
  for (const auto& [id, scan] : cohort) {
    CHECK(again.at(id).volumes.at("t1ce").data == scan.volumes.at("t1ce").data);
    CHECK(again.at(id).tumor_mask.data == scan.tumor_mask.data);
  }

  CHECK_THROWS_AS(generate_synthetic_cohort(0, 5, small_params(), 1), Error);
}

TEST_CASE("synthetic scans satisfy scan invariants") {
  auto cohort = generate_synthetic_cohort(2, 2, small_params(), 3);
  for (const auto& [id, scan] : cohort) {
    CHECK(scan.volumes.size() == 4);
    auto dims = scan.tumor_mask.dims;
    for (const auto& [mod, vol] : scan.volumes) CHECK(vol.dims == dims);
    std::size_t nonzero = 0;
    for (float v : scan.tumor_mask.data)
      if (v > 0) ++nonzero;
    CHECK(nonzero > 0);
    // enough tumor planes for the balanced LGG quota of 30
    CHECK(tumor_bearing_planes(scan.tumor_mask).size() >= 30);
  }
}

TEST_CASE("ingest_patient round trips a synthetic patient") {
  auto cohort = generate_synthetic_cohort(1, 1, small_params(), 11);
  const auto& scan = cohort.begin()->second;
  fs::path root = fs::temp_directory_path() / "tlal_ingest_test";
  fs::remove_all(root);
  std::string dir = write_patient_dir(scan, root);

  auto back = ingest_patient(dir, scan.patient_id, scan.grade);
  CHECK(back.grade == scan.grade);
  CHECK(back.volumes.at("t1").dims == scan.volumes.at("t1").dims);
  // mask is the thresholded union, here identical to the source mask
  CHECK(back.tumor_mask.data == scan.tumor_mask.data);
  fs::remove_all(root);
}

TEST_CASE("ingest_patient error paths") {
  auto cohort = generate_synthetic_cohort(1, 1, small_params(), 13);
  const auto& scan = cohort.begin()->second;
  fs::path root = fs::temp_directory_path() / "tlal_ingest_err";

  fs::remove_all(root);
  std::string dir = write_patient_dir(scan, root, /*skip_t2=*/true);
  try {
    ingest_patient(dir, scan.patient_id, scan.grade);
    FAIL("expected ingestion error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ingestion);
    CHECK(std::string(e.what()).find("t2") != std::string::npos);
  }

  fs::remove_all(root);
  dir = write_patient_dir(scan, root, false, /*empty_seg=*/true);
  try {
    ingest_patient(dir, scan.patient_id, scan.grade);
    FAIL("expected structural error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::structural);
  }
  fs::remove_all(root);
}

TEST_CASE("extract_slices contracts") {
  auto cohort = generate_synthetic_cohort(1, 1, small_params(), 21);
  const auto& scan = cohort.begin()->second;
  ExtractParams params;
  params.out_size = 16;

  auto planes = tumor_bearing_planes(scan.tumor_mask);
  REQUIRE(planes.size() >= 20);

  auto slices = extract_slices(scan, 20, 5, params);
  REQUIRE(slices.size() == 20);
  std::set<std::size_t> zs;
  for (const auto& s : slices) {
    zs.insert(s.z_index);
    CHECK(s.image.height == 16);
    CHECK(s.image.width == 16);
    CHECK(s.image.channels == 3);
    CHECK(s.label == label_of(scan.grade));
    // source plane must be tumor-bearing
    CHECK(std::find(planes.begin(), planes.end(), s.z_index) != planes.end());
  }
  CHECK(zs.size() == 20);  // distinct

  // determinism
  auto slices2 = extract_slices(scan, 20, 5, params);
  for (std::size_t i = 0; i < slices.size(); ++i) {
    CHECK(slices2[i].z_index == slices[i].z_index);
    CHECK(slices2[i].image.data == slices[i].image.data);
  }

  // exhaustive case: all tumor planes in deterministic (ascending) order
  auto all = extract_slices(scan, planes.size(), 99, params);
  for (std::size_t i = 0; i < planes.size(); ++i) CHECK(all[i].z_index == planes[i]);

  CHECK_THROWS_AS(extract_slices(scan, planes.size() + 1, 1, params), Error);
}

TEST_CASE("split_cohort stratification reproduces the 335-patient allocation") {
  std::vector<std::pair<std::string, Grade>> patients;
  for (int i = 0; i < 259; ++i) patients.emplace_back("hgg" + std::to_string(i), Grade::HGG);
  for (int i = 0; i < 76; ++i) patients.emplace_back("lgg" + std::to_string(i), Grade::LGG);

  auto split = split_cohort(patients, 203, 66, 66, 42);
  CHECK(split.train_ids.size() == 203);
  CHECK(split.val_ids.size() == 66);
  CHECK(split.test_ids.size() == 66);

  auto count_hgg = [](const std::set<std::string>& ids) {
    std::size_t n = 0;
    for (const auto& id : ids)
      if (id.rfind("hgg", 0) == 0) ++n;
    return n;
  };
  // brute-force-verified optimum: 157 HGG + 46 LGG in train
  CHECK(count_hgg(split.train_ids) == 157);
  CHECK(count_hgg(split.val_ids) == 51);
  CHECK(count_hgg(split.test_ids) == 51);

  // disjointness and coverage
  std::set<std::string> all;
  for (const auto& s : {split.train_ids, split.val_ids, split.test_ids})
    for (const auto& id : s) CHECK(all.insert(id).second);
  CHECK(all.size() == 335);

  // determinism
  auto split2 = split_cohort(patients, 203, 66, 66, 42);
  CHECK(split2.train_ids == split.train_ids);
  auto split3 = split_cohort(patients, 203, 66, 66, 43);
  CHECK(split3.train_ids != split.train_ids);
}

TEST_CASE("split_cohort brute-force ratio optimality for the train split") {
  // check 157/46 minimizes |train HGG:LGG ratio - 259/76| over allocations
  double target = 259.0 / 76.0;
  double best = 1e18;
  int best_h = -1;
  for (int h = 137; h <= 203; ++h) {
    int l = 203 - h;
    if (l < 1 || l > 76 || h > 259) continue;
    double d = std::abs(static_cast<double>(h) / l - target);
    if (d < best) {
      best = d;
      best_h = h;
    }
  }
  CHECK(best_h == 157);
}

TEST_CASE("split_cohort degenerate and error cases") {
  std::vector<std::pair<std::string, Grade>> patients;
  for (int i = 0; i < 30; ++i)
    patients.emplace_back("p" + std::to_string(i), i < 20 ? Grade::HGG : Grade::LGG);
  auto full = split_cohort(patients, 30, 0, 0, 1);
  CHECK(full.train_ids.size() == 30);
  CHECK(full.val_ids.empty());
  CHECK(full.test_ids.empty());
  CHECK_THROWS_AS(split_cohort(patients, 20, 5, 4, 1), Error);
}

TEST_CASE("build_dataset counts for both variants") {
  SyntheticParams p = small_params();
  auto cohort = generate_synthetic_cohort(6, 2, p, 31);
  std::vector<std::pair<std::string, Grade>> patients;
  for (const auto& [id, scan] : cohort) patients.emplace_back(id, scan.grade);
  auto split = split_cohort(patients, 4, 2, 2, 9);

  ExtractParams ep;
  ep.out_size = 16;
  auto imb = build_dataset(split, cohort, Variant::imbalanced, 3, ep);
  CHECK(imb.train.samples.size() + imb.val.samples.size() + imb.test.samples.size() ==
        20 * 8);

  auto bal = build_dataset(split, cohort, Variant::balanced, 3, ep);
  std::size_t expected = 6 * 10 + 2 * 30;  // 10 per HGG, 30 per LGG
  CHECK(bal.train.samples.size() + bal.val.samples.size() + bal.test.samples.size() ==
        expected);
  CHECK(bal.train.per_grade_slice_counts.at(Grade::HGG) % 10 == 0);

  // patient disjointness across splits at the slice level
  std::set<std::string> train_pat, other_pat;
  for (const auto& s : imb.train.samples) train_pat.insert(s.patient_id);
  for (const auto& s : imb.val.samples) other_pat.insert(s.patient_id);
  for (const auto& s : imb.test.samples) other_pat.insert(s.patient_id);
  for (const auto& pid : train_pat) CHECK_FALSE(other_pat.count(pid));
}

TEST_CASE("balanced slice arithmetic for the full cohort") {
  CHECK(259 * 10 + 76 * 30 == 4870);
  CHECK(335 * 20 == 6700);
}

TEST_CASE("bundle save/load round trip") {
  SyntheticParams p = small_params();
  auto cohort = generate_synthetic_cohort(2, 2, p, 77);
  std::vector<std::pair<std::string, Grade>> patients;
  for (const auto& [id, scan] : cohort) patients.emplace_back(id, scan.grade);
  auto split = split_cohort(patients, 2, 1, 1, 9);
  ExtractParams ep;
  ep.out_size = 12;
  auto bundle = build_dataset(split, cohort, Variant::imbalanced, 3, ep);

  fs::path dir = fs::temp_directory_path() / "tlal_bundle_test";
  fs::remove_all(dir);
  save_bundle(bundle, dir.string());
  auto back = load_bundle(dir.string());
  REQUIRE(back.train.samples.size() == bundle.train.samples.size());
  for (std::size_t i = 0; i < bundle.train.samples.size(); ++i) {
    CHECK(back.train.samples[i].sample_id == bundle.train.samples[i].sample_id);
    CHECK(back.train.samples[i].label == bundle.train.samples[i].label);
    CHECK(back.train.samples[i].image.data == bundle.train.samples[i].image.data);
  }
  CHECK(back.test.samples.size() == bundle.test.samples.size());
  fs::remove_all(dir);
}

TEST_CASE("resize_bilinear identity and downscale") {
  std::vector<float> img(16);
  for (int i = 0; i < 16; ++i) img[i] = static_cast<float>(i);
  CHECK(resize_bilinear(img, 4, 4, 4, 4) == img);
  auto half = resize_bilinear(img, 4, 4, 2, 2);
  REQUIRE(half.size() == 4);
  CHECK(half[0] == doctest::Approx(2.5));  // mean of the 2x2 block
}
