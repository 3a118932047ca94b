#include "tlal/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tlal::data {

std::string to_string(Grade g) { return g == Grade::HGG ? "HGG" : "LGG"; }

Grade grade_from_string(const std::string& s) {
  if (s == "HGG") return Grade::HGG;
  if (s == "LGG") return Grade::LGG;
  fail(ErrorCode::configuration, "unknown grade: " + s);
}

std::string to_string(Variant v) {
  return v == Variant::imbalanced ? "imbalanced" : "balanced";
}

Variant variant_from_string(const std::string& s) {
  if (s == "imbalanced") return Variant::imbalanced;
  if (s == "balanced") return Variant::balanced;
  fail(ErrorCode::configuration, "unknown dataset variant: " + s);
}

std::vector<std::string> SliceDataset::sample_ids() const {
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.sample_id);
  return ids;
}

// ---- ingestion ----

namespace {

std::string find_modality_file(const std::string& dir, const std::string& patient_id,
                               const std::string& suffix) {
  for (const char* ext : {".nii.gz", ".nii"}) {
    fs::path p = fs::path(dir) / (patient_id + "_" + suffix + ext);
    if (fs::exists(p)) return p.string();
  }
  // Fall back to any file carrying the suffix, for slightly different stems.
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      std::string name = e.path().filename().string();
      if (name.find("_" + suffix + ".nii") != std::string::npos) return e.path().string();
    }
  }
  return {};
}

}  // namespace

PatientScan ingest_patient(const std::string& directory, const std::string& patient_id,
                           Grade grade) {
  PatientScan scan;
  scan.patient_id = patient_id;
  scan.grade = grade;
  for (const auto& mod : kModalities) {
    std::string path = find_modality_file(directory, patient_id, mod);
    if (path.empty())
      fail(ErrorCode::ingestion,
           "missing modality " + mod + " for patient " + patient_id + " in " + directory);
    scan.volumes[mod] = nifti::read(path);
  }
  std::string seg_path = find_modality_file(directory, patient_id, "seg");
  if (seg_path.empty())
    fail(ErrorCode::ingestion, "missing segmentation file for patient " + patient_id);
  nifti::Volume seg = nifti::read(seg_path);

  const auto& dims = scan.volumes.begin()->second.dims;
  for (const auto& [mod, vol] : scan.volumes)
    if (vol.dims != dims)
      fail(ErrorCode::structural, "dimension mismatch in modality " + mod + " for patient " +
                                      patient_id);
  if (seg.dims != dims)
    fail(ErrorCode::structural, "segmentation dimension mismatch for patient " + patient_id);

  // The complete tumor region is the union of the three non-background labels.
  scan.tumor_mask.dims = seg.dims;
  scan.tumor_mask.data.resize(seg.size());
  std::size_t nonzero = 0;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    float m = seg.data[i] > 0.5f ? 1.0f : 0.0f;
    scan.tumor_mask.data[i] = m;
    if (m > 0.0f) ++nonzero;
  }
  if (nonzero == 0)
    fail(ErrorCode::structural, "tumor mask empty for patient " + patient_id);
  return scan;
}

// ---- slice extraction ----

std::vector<std::size_t> tumor_bearing_planes(const nifti::Volume& mask,
                                              std::size_t min_voxels) {
  std::vector<std::size_t> planes;
  const std::size_t plane_size = mask.dims[0] * mask.dims[1];
  for (std::size_t z = 0; z < mask.dims[2]; ++z) {
    std::size_t count = 0;
    const float* p = mask.data.data() + z * plane_size;
    for (std::size_t i = 0; i < plane_size; ++i)
      if (p[i] > 0.0f) ++count;
    if (count >= min_voxels) planes.push_back(z);
  }
  return planes;
}

std::vector<float> resize_bilinear(const std::vector<float>& src, std::size_t sh,
                                   std::size_t sw, std::size_t dh, std::size_t dw) {
  std::vector<float> dst(dh * dw);
  if (sh == dh && sw == dw) return src;
  const double sy = static_cast<double>(sh) / dh;
  const double sx = static_cast<double>(sw) / dw;
  for (std::size_t y = 0; y < dh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::max(0.0, std::min(fy, static_cast<double>(sh - 1)));
    std::size_t y0 = static_cast<std::size_t>(fy);
    std::size_t y1 = std::min(y0 + 1, sh - 1);
    double wy = fy - y0;
    for (std::size_t x = 0; x < dw; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::max(0.0, std::min(fx, static_cast<double>(sw - 1)));
      std::size_t x0 = static_cast<std::size_t>(fx);
      std::size_t x1 = std::min(x0 + 1, sw - 1);
      double wx = fx - x0;
      double top = src[y0 * sw + x0] * (1 - wx) + src[y0 * sw + x1] * wx;
      double bot = src[y1 * sw + x0] * (1 - wx) + src[y1 * sw + x1] * wx;
      dst[y * dw + x] = static_cast<float>(top * (1 - wy) + bot * wy);
    }
  }
  return dst;
}

namespace {

// ImageNet channel statistics, applied after min-max scaling so the
// pretrained backbone sees inputs in its expected range.
constexpr double kChanMean[3] = {0.485, 0.456, 0.406};
constexpr double kChanStd[3] = {0.229, 0.224, 0.225};

std::string make_sample_id(const std::string& patient_id, std::size_t z) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_z%04zu", z);
  return patient_id + buf;
}

}  // namespace

std::vector<SliceSample> extract_slices(const PatientScan& scan, std::size_t n_slices,
                                        std::uint64_t seed, const ExtractParams& params) {
  for (const auto& mod : kChannelModalities)
    if (!scan.volumes.count(mod))
      fail(ErrorCode::structural, "scan missing channel modality " + mod);

  std::vector<std::size_t> planes =
      tumor_bearing_planes(scan.tumor_mask, params.min_tumor_voxels);
  if (planes.size() < n_slices)
    fail(ErrorCode::sampling, "patient " + scan.patient_id + " has only " +
                                  std::to_string(planes.size()) +
                                  " tumor-bearing planes, need " + std::to_string(n_slices));

  Rng rng = make_rng(seed);
  std::vector<std::size_t> picks = sample_without_replacement(rng, planes.size(), n_slices);
  std::vector<std::size_t> zs;
  zs.reserve(n_slices);
  for (std::size_t p : picks) zs.push_back(planes[p]);
  std::sort(zs.begin(), zs.end());

  const std::size_t sw = scan.tumor_mask.dims[0];
  const std::size_t sh = scan.tumor_mask.dims[1];
  const std::size_t plane_size = sw * sh;
  const std::size_t out = params.out_size;

  std::vector<SliceSample> samples;
  samples.reserve(n_slices);
  for (std::size_t z : zs) {
    SliceSample s;
    s.sample_id = make_sample_id(scan.patient_id, z);
    s.patient_id = scan.patient_id;
    s.z_index = z;
    s.label = label_of(scan.grade);
    s.image.channels = 3;
    s.image.height = out;
    s.image.width = out;
    s.image.data.resize(3 * out * out);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& vol = scan.volumes.at(kChannelModalities[c]);
      std::vector<float> plane(vol.data.begin() + z * plane_size,
                               vol.data.begin() + (z + 1) * plane_size);
      if (params.normalize) {
        float lo = plane[0], hi = plane[0];
        for (float v : plane) { lo = std::min(lo, v); hi = std::max(hi, v); }
        float range = hi - lo;
        if (range > 0) {
          for (float& v : plane) v = (v - lo) / range;
        } else {
          for (float& v : plane) v = 0.0f;
        }
      }
      std::vector<float> resized = resize_bilinear(plane, sh, sw, out, out);
      if (params.normalize) {
        for (float& v : resized)
          v = static_cast<float>((v - kChanMean[c]) / kChanStd[c]);
      }
      std::copy(resized.begin(), resized.end(), s.image.data.begin() + c * out * out);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

// ---- stratified split ----

CohortSplit split_cohort(const std::vector<std::pair<std::string, Grade>>& patients,
                         std::size_t n_train, std::size_t n_val, std::size_t n_test,
                         std::uint64_t seed) {
  const std::size_t n = patients.size();
  if (n_train + n_val + n_test != n)
    fail(ErrorCode::configuration,
         "split sizes sum to " + std::to_string(n_train + n_val + n_test) +
             " but cohort has " + std::to_string(n) + " patients");

  std::vector<std::string> hgg, lgg;
  for (const auto& [id, g] : patients)
    (g == Grade::HGG ? hgg : lgg).push_back(id);

  // LGG count per split by largest-remainder rounding of the global ratio;
  // HGG takes the rest. Reproduces 203/66/66 -> 157+46 deterministically.
  const std::array<std::size_t, 3> sizes = {n_train, n_val, n_test};
  std::array<std::size_t, 3> lgg_counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double quota = n == 0 ? 0.0
                          : static_cast<double>(sizes[i]) *
                                static_cast<double>(lgg.size()) / static_cast<double>(n);
    lgg_counts[i] = static_cast<std::size_t>(quota);
    remainders[i] = quota - static_cast<double>(lgg_counts[i]);
    assigned += lgg_counts[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (std::size_t left = lgg.size() - assigned, k = 0; left > 0; --left, ++k)
    ++lgg_counts[order[k % 3]];

  for (int i = 0; i < 3; ++i)
    if (lgg_counts[i] > sizes[i] || sizes[i] - lgg_counts[i] > hgg.size())
      fail(ErrorCode::stratification,
           "grade stratum too small to satisfy split sizes with rounding");
  std::size_t hgg_total = 0;
  for (int i = 0; i < 3; ++i) hgg_total += sizes[i] - lgg_counts[i];
  if (hgg_total != hgg.size())
    fail(ErrorCode::stratification, "stratified allocation does not cover the HGG stratum");

  // Deterministic assignment: sort ids, shuffle with the seed, deal in order
  // train, val, test within each stratum.
  std::sort(hgg.begin(), hgg.end());
  std::sort(lgg.begin(), lgg.end());
  Rng rng = make_rng(seed);
  auto shuffle_ids = [&rng](std::vector<std::string>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[rand_index(rng, i)]);
  };
  shuffle_ids(hgg);
  shuffle_ids(lgg);

  CohortSplit split;
  split.seed = seed;
  std::array<std::set<std::string>*, 3> dests = {&split.train_ids, &split.val_ids,
                                                 &split.test_ids};
  std::size_t li = 0, hi = 0;
  for (int i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < lgg_counts[i]; ++k) dests[i]->insert(lgg[li++]);
    for (std::size_t k = 0; k < sizes[i] - lgg_counts[i]; ++k) dests[i]->insert(hgg[hi++]);
  }
  return split;
}

// ---- dataset assembly ----

std::size_t slices_per_patient(Variant variant, Grade grade) {
  if (variant == Variant::imbalanced) return 20;
  return grade == Grade::HGG ? 10 : 30;
}

namespace {

SliceDataset build_split(const std::set<std::string>& ids,
                         const std::map<std::string, PatientScan>& scans, Variant variant,
                         std::uint64_t seed, const ExtractParams& params) {
  SliceDataset ds;
  ds.variant = variant;
  ds.per_grade_slice_counts[Grade::HGG] = 0;
  ds.per_grade_slice_counts[Grade::LGG] = 0;
  for (const auto& pid : ids) {  // std::set iterates in sorted order
    auto it = scans.find(pid);
    if (it == scans.end())
      fail(ErrorCode::configuration, "split references patient without a scan: " + pid);
    const PatientScan& scan = it->second;
    std::size_t n = slices_per_patient(variant, scan.grade);
    std::vector<SliceSample> slices;
    try {
      slices = extract_slices(scan, n, derive_seed(seed, "extract:" + pid), params);
    } catch (const Error& e) {
      fail(e.code(), std::string("patient ") + pid + ": " + e.what());
    }
    ds.per_grade_slice_counts[scan.grade] += slices.size();
    for (auto& s : slices) ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace

DatasetBundle build_dataset(const CohortSplit& split,
                            const std::map<std::string, PatientScan>& scans,
                            Variant variant, std::uint64_t seed,
                            const ExtractParams& params) {
  DatasetBundle b;
  b.train = build_split(split.train_ids, scans, variant, seed, params);
  b.val = build_split(split.val_ids, scans, variant, seed, params);
  b.test = build_split(split.test_ids, scans, variant, seed, params);
  return b;
}

// ---- synthetic cohort ----

std::map<std::string, PatientScan> generate_synthetic_cohort(std::size_t n_hgg,
                                                             std::size_t n_lgg,
                                                             const SyntheticParams& params,
                                                             std::uint64_t seed) {
  if (n_hgg < 1 || n_lgg < 1)
    fail(ErrorCode::configuration, "synthetic cohort needs at least one patient per grade");

  std::map<std::string, PatientScan> cohort;
  const std::size_t nx = params.nx, ny = params.ny, nz = params.nz;

  auto make_patient = [&](const std::string& pid, Grade grade) {
    Rng rng = make_rng(derive_seed(seed, "synth:" + pid));
    PatientScan scan;
    scan.patient_id = pid;
    scan.grade = grade;

    // Lesion ellipsoid; the grades differ only in contrast-channel intensity
    // (size and position distributions are identical so neither class is
    // systematically easier).
    const bool hgg = grade == Grade::HGG;
    double cx = uniform(rng, 0.35, 0.65) * nx;
    double cy = uniform(rng, 0.35, 0.65) * ny;
    double cz = 0.5 * nz;
    double rx = uniform(rng, 0.14, 0.2) * nx;
    double ry = uniform(rng, 0.14, 0.2) * ny;
    double rz = uniform(rng, 0.72, 0.85) * nz * 0.5;  // >= 32 tumor planes at nz=48
    double lesion_mean = hgg ? params.hgg_intensity : params.lgg_intensity;
    // The contrast midpoint carries no grade information at all.
    double midpoint = 0.5 * (params.hgg_intensity + params.lgg_intensity);

    // Per-plane appearance. Outlier planes sit at the contrast midpoint:
    // visible lesion, zero grade signal, so their labels are coin flips a
    // learner can only memorize.
    std::vector<double> plane_intensity(nz);
    std::vector<bool> plane_outlier(nz, false);
    // Per-plane center jitter keeps lesion position from acting as a
    // memorizable patient fingerprint.
    std::vector<double> plane_cx(nz), plane_cy(nz);
    for (std::size_t z = 0; z < nz; ++z) {
      bool outlier = uniform(rng, 0.0, 1.0) < params.outlier_rate;
      plane_outlier[z] = outlier;
      plane_intensity[z] = outlier
                               ? gaussian(rng, midpoint, 0.5 * params.intensity_sigma)
                               : gaussian(rng, lesion_mean, params.intensity_sigma);
      plane_cx[z] = cx + uniform(rng, -0.12, 0.12) * nx;
      plane_cy[z] = cy + uniform(rng, -0.12, 0.12) * ny;
    }

    for (const auto& mod : kModalities) {
      nifti::Volume& vol = scan.volumes[mod];
      vol.dims = {nx, ny, nz};
      vol.data.assign(nx * ny * nz, 0.0f);
    }
    scan.tumor_mask.dims = {nx, ny, nz};
    scan.tumor_mask.data.assign(nx * ny * nz, 0.0f);

    const double brain_r = 0.45;
    for (std::size_t z = 0; z < nz; ++z) {
      for (std::size_t y = 0; y < ny; ++y) {
        for (std::size_t x = 0; x < nx; ++x) {
          double dx = (static_cast<double>(x) / nx - 0.5) / brain_r;
          double dy = (static_cast<double>(y) / ny - 0.5) / brain_r;
          bool in_brain = dx * dx + dy * dy <= 1.0;
          double lx = (x - plane_cx[z]) / rx, ly = (y - plane_cy[z]) / ry,
                 lz = (z - cz) / rz;
          bool in_lesion = lx * lx + ly * ly + lz * lz <= 1.0;
          std::size_t i = (z * ny + y) * nx + x;
          for (std::size_t c = 0; c < kModalities.size(); ++c) {
            // t1ce alone separates the grades: its brain background sits at
            // the contrast midpoint and the lesion is brighter (HGG) or
            // darker (LGG). The other modalities show every lesion at the
            // same fixed intensity, so saliency carries no class signal.
            bool contrast = kModalities[c] == "t1ce";
            double base = in_brain ? (contrast ? midpoint : 0.35) : 0.0;
            double v = base;
            if (in_lesion) v = contrast ? plane_intensity[z] : 0.8;
            v += gaussian(rng, 0.0, params.noise_sigma);
            scan.volumes[kModalities[c]].data[i] = static_cast<float>(v);
          }
          if (in_lesion) scan.tumor_mask.data[i] = 1.0f;
        }
      }
    }
    return scan;
  };

  char buf[32];
  for (std::size_t i = 0; i < n_hgg; ++i) {
    std::snprintf(buf, sizeof(buf), "synth_hgg_%03zu", i);
    cohort[buf] = make_patient(buf, Grade::HGG);
  }
  for (std::size_t i = 0; i < n_lgg; ++i) {
    std::snprintf(buf, sizeof(buf), "synth_lgg_%03zu", i);
    cohort[buf] = make_patient(buf, Grade::LGG);
  }
  return cohort;
}

// ---- persistence ----

namespace {

constexpr char kBlobMagic[8] = {'T', 'L', 'A', 'L', 'I', 'M', 'G', '1'};

void save_split(const SliceDataset& ds, const std::string& split_name,
                const std::string& out_dir, std::ofstream& manifest) {
  std::string blob_name = split_name + "_images.bin";
  fs::path blob_path = fs::path(out_dir) / blob_name;
  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) fail(ErrorCode::io, "cannot open image blob for write: " + blob_path.string());
  blob.write(kBlobMagic, 8);
  auto write_u32 = [&blob](std::uint32_t v) {
    blob.write(reinterpret_cast<const char*>(&v), 4);
  };
  write_u32(static_cast<std::uint32_t>(ds.samples.size()));
  std::uint32_t c = 3, h = 0, w = 0;
  if (!ds.samples.empty()) {
    h = static_cast<std::uint32_t>(ds.samples[0].image.height);
    w = static_cast<std::uint32_t>(ds.samples[0].image.width);
  }
  write_u32(c);
  write_u32(h);
  write_u32(w);

  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const SliceSample& s = ds.samples[i];
    blob.write(reinterpret_cast<const char*>(s.image.data.data()),
               static_cast<std::streamsize>(s.image.data.size() * sizeof(float)));
    json row;
    row["sample_id"] = s.sample_id;
    row["patient_id"] = s.patient_id;
    row["z_index"] = s.z_index;
    row["label"] = s.label;
    row["split"] = split_name;
    row["image_file"] = blob_name;
    row["image_index"] = i;
    manifest << row.dump() << "\n";
  }
}

SliceDataset load_split(const std::string& out_dir, const std::string& split_name,
                        const std::vector<json>& rows, Variant variant) {
  SliceDataset ds;
  ds.variant = variant;
  ds.per_grade_slice_counts[Grade::HGG] = 0;
  ds.per_grade_slice_counts[Grade::LGG] = 0;

  std::string blob_name;
  for (const auto& row : rows)
    if (row.at("split") == split_name) { blob_name = row.at("image_file"); break; }
  if (blob_name.empty()) return ds;

  fs::path blob_path = fs::path(out_dir) / blob_name;
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) fail(ErrorCode::io, "cannot open image blob: " + blob_path.string());
  char magic[8];
  blob.read(magic, 8);
  if (std::memcmp(magic, kBlobMagic, 8) != 0)
    fail(ErrorCode::structural, "bad image blob magic: " + blob_path.string());
  std::uint32_t n, c, h, w;
  blob.read(reinterpret_cast<char*>(&n), 4);
  blob.read(reinterpret_cast<char*>(&c), 4);
  blob.read(reinterpret_cast<char*>(&h), 4);
  blob.read(reinterpret_cast<char*>(&w), 4);

  for (const auto& row : rows) {
    if (row.at("split") != split_name) continue;
    SliceSample s;
    s.sample_id = row.at("sample_id");
    s.patient_id = row.at("patient_id");
    s.z_index = row.at("z_index");
    s.label = row.at("label");
    std::size_t idx = row.at("image_index");
    if (idx >= n) fail(ErrorCode::structural, "image index out of range in manifest");
    s.image.channels = c;
    s.image.height = h;
    s.image.width = w;
    s.image.data.resize(static_cast<std::size_t>(c) * h * w);
    blob.seekg(24 + static_cast<std::streamoff>(idx) * c * h * w * sizeof(float));
    blob.read(reinterpret_cast<char*>(s.image.data.data()),
              static_cast<std::streamsize>(s.image.data.size() * sizeof(float)));
    if (!blob) fail(ErrorCode::io, "image blob truncated: " + blob_path.string());
    ds.per_grade_slice_counts[s.label == 1 ? Grade::HGG : Grade::LGG] += 1;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace

void save_bundle(const DatasetBundle& bundle, const std::string& out_dir) {
  fs::create_directories(out_dir);
  fs::path manifest_path = fs::path(out_dir) / "manifest.jsonl";
  std::ofstream manifest(manifest_path);
  if (!manifest) fail(ErrorCode::io, "cannot open manifest for write: " + manifest_path.string());
  json meta;
  meta["variant"] = to_string(bundle.train.variant);
  manifest << meta.dump() << "\n";
  save_split(bundle.train, "train", out_dir, manifest);
  save_split(bundle.val, "val", out_dir, manifest);
  save_split(bundle.test, "test", out_dir, manifest);
}

DatasetBundle load_bundle(const std::string& out_dir) {
  fs::path manifest_path = fs::path(out_dir) / "manifest.jsonl";
  std::ifstream manifest(manifest_path);
  if (!manifest) fail(ErrorCode::io, "cannot open manifest: " + manifest_path.string());
  std::string line;
  if (!std::getline(manifest, line))
    fail(ErrorCode::io, "empty manifest: " + manifest_path.string());
  json meta = json::parse(line);
  Variant variant = variant_from_string(meta.at("variant").get<std::string>());
  std::vector<json> rows;
  while (std::getline(manifest, line)) {
    if (!line.empty()) rows.push_back(json::parse(line));
  }
  DatasetBundle b;
  b.train = load_split(out_dir, "train", rows, variant);
  b.val = load_split(out_dir, "val", rows, variant);
  b.test = load_split(out_dir, "test", rows, variant);
  return b;
}

}  // namespace tlal::data
