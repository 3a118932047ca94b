#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "tlal/common.hpp"
#include "tlal/nifti.hpp"

namespace tlal::data {

enum class Grade { LGG, HGG };

inline int label_of(Grade g) { return g == Grade::HGG ? 1 : 0; }
std::string to_string(Grade g);
Grade grade_from_string(const std::string& s);

inline const std::vector<std::string> kModalities = {"t1", "t1ce", "t2", "flair"};
// Channel order for slice images, frozen by config default.
inline const std::vector<std::string> kChannelModalities = {"t1", "t1ce", "t2"};

struct PatientScan {
  std::string patient_id;
  Grade grade = Grade::LGG;
  std::map<std::string, nifti::Volume> volumes;  // modality -> volume
  nifti::Volume tumor_mask;                      // binary, union of tumor labels
};

// 3-channel 2D image, channel-major (c, y, x).
struct SliceImage {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
};

struct SliceSample {
  std::string sample_id;
  std::string patient_id;
  std::size_t z_index = 0;
  SliceImage image;
  int label = 0;  // 0 = LGG, 1 = HGG
};

struct CohortSplit {
  std::set<std::string> train_ids, val_ids, test_ids;
  std::uint64_t seed = 0;
};

enum class Variant { imbalanced, balanced };
std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct SliceDataset {
  std::vector<SliceSample> samples;
  Variant variant = Variant::imbalanced;
  std::map<Grade, std::size_t> per_grade_slice_counts;

  std::vector<std::string> sample_ids() const;
};

struct ExtractParams {
  std::size_t out_size = 224;       // spatial size after resize
  std::size_t min_tumor_voxels = 1; // threshold for "slice with tumor region"
  bool normalize = true;            // min-max to [0,1] + pretraining channel stats
};

// ---- operations ----

// Directory-per-patient layout with suffixes _t1/_t1ce/_t2/_flair/_seg
// (.nii or .nii.gz). Grade comes from the grade argument (the release groups
// patients under HGG/ and LGG/ directories; the caller passes that grouping).
PatientScan ingest_patient(const std::string& directory, const std::string& patient_id,
                           Grade grade);

std::vector<SliceSample> extract_slices(const PatientScan& scan, std::size_t n_slices,
                                        std::uint64_t seed,
                                        const ExtractParams& params = {});

// Indices of axial planes whose mask area meets the threshold.
std::vector<std::size_t> tumor_bearing_planes(const nifti::Volume& mask,
                                              std::size_t min_voxels = 1);

// Slices extracted per patient: 20 under the imbalanced variant; 10 (HGG)
// or 30 (LGG) under the balanced variant.
std::size_t slices_per_patient(Variant variant, Grade grade);

CohortSplit split_cohort(const std::vector<std::pair<std::string, Grade>>& patients,
                         std::size_t n_train, std::size_t n_val, std::size_t n_test,
                         std::uint64_t seed);

struct DatasetBundle {
  SliceDataset train, val, test;
};

DatasetBundle build_dataset(const CohortSplit& split,
                            const std::map<std::string, PatientScan>& scans,
                            Variant variant, std::uint64_t seed,
                            const ExtractParams& params = {});

struct SyntheticParams {
  std::size_t nx = 64, ny = 64, nz = 48;
  double noise_sigma = 0.08;
  // Fraction of tumor-bearing planes rendered as misleading outliers:
  // lesion appearance drawn from the other grade plus heavy speckle.
  double outlier_rate = 0.10;
  // Lesion intensity means for the contrast channel, by grade.
  double hgg_intensity = 0.85;
  double lgg_intensity = 0.45;
  double intensity_sigma = 0.06;
};

std::map<std::string, PatientScan> generate_synthetic_cohort(std::size_t n_hgg,
                                                             std::size_t n_lgg,
                                                             const SyntheticParams& params,
                                                             std::uint64_t seed);

// Bilinear resize of a single-channel 2D array.
std::vector<float> resize_bilinear(const std::vector<float>& src, std::size_t sh,
                                   std::size_t sw, std::size_t dh, std::size_t dw);

// ---- manifest + image blob persistence ----

// Writes one JSONL manifest plus one raw float32 image blob per split.
void save_bundle(const DatasetBundle& bundle, const std::string& out_dir);
DatasetBundle load_bundle(const std::string& out_dir);

}  // namespace tlal::data
