#pragma once

#include <array>
#include <string>
#include <vector>

#include "tlal/common.hpp"

namespace tlal::nifti {

// Minimal single-file NIfTI-1 volume: row-major storage indexed (x, y, z)
// with x fastest, matching the on-disk layout.
struct Volume {
  std::array<std::size_t, 3> dims{0, 0, 0};  // nx, ny, nz
  std::vector<float> data;

  float& at(std::size_t x, std::size_t y, std::size_t z) {
    return data[(z * dims[1] + y) * dims[0] + x];
  }
  float at(std::size_t x, std::size_t y, std::size_t z) const {
    return data[(z * dims[1] + y) * dims[0] + x];
  }
  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }
};

// Reads a .nii or .nii.gz file (NIfTI-1, 3D; datatypes u8/i16/i32/f32/f64).
// Applies scl_slope/scl_inter when set.
Volume read(const std::string& path);

// Writes an uncompressed float32 .nii (or gzip-compressed .nii.gz).
void write(const std::string& path, const Volume& vol);

}  // namespace tlal::nifti
