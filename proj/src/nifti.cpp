#include "tlal/nifti.hpp"

#include <zlib.h>

#include <cstring>

namespace tlal::nifti {

namespace {

constexpr std::size_t kHeaderSize = 348;

// NIfTI-1 datatype codes
enum : std::int16_t {
  DT_UINT8 = 2,
  DT_INT16 = 4,
  DT_INT32 = 8,
  DT_FLOAT32 = 16,
  DT_FLOAT64 = 64,
};

std::vector<unsigned char> read_all(const std::string& path) {
  // gzread handles both gzip and plain files transparently.
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) fail(ErrorCode::io, "cannot open NIfTI file: " + path);
  std::vector<unsigned char> buf;
  unsigned char chunk[1 << 16];
  int n;
  while ((n = gzread(f, chunk, sizeof(chunk))) > 0)
    buf.insert(buf.end(), chunk, chunk + n);
  bool bad = n < 0;
  gzclose(f);
  if (bad) fail(ErrorCode::io, "decompression error reading: " + path);
  return buf;
}

template <typename T>
T load_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

}  // namespace

Volume read(const std::string& path) {
  std::vector<unsigned char> raw = read_all(path);
  if (raw.size() < kHeaderSize)
    fail(ErrorCode::structural, "NIfTI file truncated: " + path);
  const unsigned char* h = raw.data();

  auto sizeof_hdr = load_le<std::int32_t>(h + 0);
  if (sizeof_hdr != 348)
    fail(ErrorCode::structural, "not a NIfTI-1 file (bad header size): " + path);
  if (std::memcmp(h + 344, "n+1", 3) != 0)
    fail(ErrorCode::structural, "unsupported NIfTI magic (need single-file n+1): " + path);

  std::int16_t ndim = load_le<std::int16_t>(h + 40);
  if (ndim < 3) fail(ErrorCode::structural, "NIfTI volume must be 3D: " + path);
  Volume vol;
  for (int i = 0; i < 3; ++i)
    vol.dims[i] = static_cast<std::size_t>(load_le<std::int16_t>(h + 40 + 2 * (i + 1)));
  for (int i = 4; i <= ndim; ++i) {
    if (load_le<std::int16_t>(h + 40 + 2 * i) > 1)
      fail(ErrorCode::structural, "NIfTI volume has >3 non-trivial dimensions: " + path);
  }

  std::int16_t datatype = load_le<std::int16_t>(h + 70);
  float vox_offset = load_le<float>(h + 108);
  float slope = load_le<float>(h + 112);
  float inter = load_le<float>(h + 116);
  if (slope == 0.0f) { slope = 1.0f; inter = 0.0f; }

  std::size_t offset = static_cast<std::size_t>(vox_offset);
  std::size_t n = vol.size();
  vol.data.resize(n);
  const unsigned char* d = raw.data() + offset;

  auto need = [&](std::size_t elem) {
    if (raw.size() < offset + n * elem)
      fail(ErrorCode::structural, "NIfTI data truncated: " + path);
  };
  switch (datatype) {
    case DT_UINT8:
      need(1);
      for (std::size_t i = 0; i < n; ++i) vol.data[i] = slope * d[i] + inter;
      break;
    case DT_INT16:
      need(2);
      for (std::size_t i = 0; i < n; ++i)
        vol.data[i] = slope * load_le<std::int16_t>(d + 2 * i) + inter;
      break;
    case DT_INT32:
      need(4);
      for (std::size_t i = 0; i < n; ++i)
        vol.data[i] = slope * load_le<std::int32_t>(d + 4 * i) + inter;
      break;
    case DT_FLOAT32:
      need(4);
      for (std::size_t i = 0; i < n; ++i)
        vol.data[i] = slope * load_le<float>(d + 4 * i) + inter;
      break;
    case DT_FLOAT64:
      need(8);
      for (std::size_t i = 0; i < n; ++i)
        vol.data[i] = static_cast<float>(slope * load_le<double>(d + 8 * i) + inter);
      break;
    default:
      fail(ErrorCode::structural,
           "unsupported NIfTI datatype " + std::to_string(datatype) + ": " + path);
  }
  return vol;
}

void write(const std::string& path, const Volume& vol) {
  unsigned char h[kHeaderSize + 4] = {0};  // +4: the extension flag
  auto store = [&](std::size_t off, auto v) { std::memcpy(h + off, &v, sizeof(v)); };
  store(0, std::int32_t{348});
  store(40, std::int16_t{3});
  for (int i = 0; i < 3; ++i)
    store(42 + 2 * i, static_cast<std::int16_t>(vol.dims[i]));
  for (int i = 4; i < 8; ++i) store(40 + 2 * i, std::int16_t{1});
  store(70, std::int16_t{DT_FLOAT32});
  store(72, std::int16_t{32});  // bitpix
  store(108, float{352.0f});    // vox_offset
  store(112, float{1.0f});      // scl_slope
  // pixdim: 1mm isotropic
  store(76, float{0.0f});
  for (int i = 1; i <= 3; ++i) store(76 + 4 * i, float{1.0f});
  std::memcpy(h + 344, "n+1\0", 4);

  bool gz = path.size() > 3 && path.substr(path.size() - 3) == ".gz";
  if (gz) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) fail(ErrorCode::io, "cannot open NIfTI file for write: " + path);
    bool ok = gzwrite(f, h, sizeof(h)) == static_cast<int>(sizeof(h)) &&
              gzwrite(f, vol.data.data(),
                      static_cast<unsigned>(vol.data.size() * sizeof(float))) ==
                  static_cast<int>(vol.data.size() * sizeof(float));
    gzclose(f);
    if (!ok) fail(ErrorCode::io, "write failed: " + path);
  } else {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) fail(ErrorCode::io, "cannot open NIfTI file for write: " + path);
    bool ok = std::fwrite(h, 1, sizeof(h), f) == sizeof(h) &&
              std::fwrite(vol.data.data(), sizeof(float), vol.data.size(), f) ==
                  vol.data.size();
    std::fclose(f);
    if (!ok) fail(ErrorCode::io, "write failed: " + path);
  }
}

}  // namespace tlal::nifti
