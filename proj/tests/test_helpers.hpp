#pragma once

// Shared fixtures: tiny separable slice datasets that train in milliseconds.

#include <cstdio>
#include <random>
#include <string>

#include "tlal/data.hpp"

namespace helpers {

// Two visually distinct classes: label-1 slices carry a bright center patch.
inline tlal::data::SliceDataset make_separable_dataset(std::size_t n_per_class,
                                                       std::size_t size,
                                                       std::uint64_t seed,
                                                       const std::string& patient_prefix,
                                                       double noise = 0.3,
                                                       double signal = 1.0) {
  tlal::data::SliceDataset ds;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, static_cast<float>(noise));
  char buf[64];
  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    int label = i < n_per_class ? 0 : 1;
    tlal::data::SliceSample s;
    std::snprintf(buf, sizeof(buf), "%s_p%03zu_s%04zu", patient_prefix.c_str(),
                  i % 7 + (label ? 100 : 0), i);
    s.sample_id = buf;
    std::snprintf(buf, sizeof(buf), "%s_pat%03zu", patient_prefix.c_str(),
                  i % 7 + (label ? 100 : 0));
    s.patient_id = buf;
    s.z_index = i;
    s.label = label;
    s.image.channels = 3;
    s.image.height = size;
    s.image.width = size;
    s.image.data.resize(3 * size * size);
    for (auto& v : s.image.data) v = gauss(rng);
    if (label == 1) {
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = size / 4; y < 3 * size / 4; ++y)
          for (std::size_t x = size / 4; x < 3 * size / 4; ++x)
            s.image.at(c, y, x) += static_cast<float>(signal);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace helpers
