#include "camelion/nifti.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "camelion/error.hpp"

namespace camelion {
namespace {

constexpr std::uint32_t kHeaderSize = 348;
constexpr int kDtUint8 = 2;
constexpr int kDtInt16 = 4;
constexpr int kDtFloat32 = 16;

constexpr std::uint32_t swap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
}

std::uint32_t load_u32(const unsigned char* p, bool swap) {
  const std::uint32_t v = std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
                          (std::uint32_t{p[3]} << 24);
  return swap ? swap32(v) : v;
}

std::uint16_t load_u16(const unsigned char* p, bool swap) {
  const auto v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  return swap ? static_cast<std::uint16_t>((v >> 8) | (v << 8)) : v;
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::variant<ScalarVolume, LabelVolume> import_nifti(const std::filesystem::path& path, NiftiTarget target) {
  const auto file = slurp(path);
  if (file.size() < kHeaderSize) throw FormatError(path.string() + ": shorter than a NIfTI-1 header");
  const unsigned char* hdr = file.data();

  bool swap = false;
  if (load_u32(hdr, false) != kHeaderSize) {
    if (load_u32(hdr, true) != kHeaderSize) throw FormatError(path.string() + ": sizeof_hdr is not 348");
    swap = true;
  }
  const bool single_file = std::memcmp(hdr + 344, "n+1\0", 4) == 0;
  const bool pair_file = std::memcmp(hdr + 344, "ni1\0", 4) == 0;
  if (!single_file && !pair_file) throw FormatError(path.string() + ": magic is neither \"n+1\" nor \"ni1\"");

  auto i16 = [&](std::size_t off) { return static_cast<std::int16_t>(load_u16(hdr + off, swap)); };
  auto f32 = [&](std::size_t off) { return std::bit_cast<float>(load_u32(hdr + off, swap)); };

  const int ndim = i16(40);
  if (ndim < 1 || ndim > 7) throw FormatError(path.string() + ": dim[0] out of range");
  VolumeHeader h;
  for (int a = 0; a < 3; ++a) {
    const int d = a < ndim ? i16(42 + 2 * a) : 1;
    if (d < 1) throw FormatError(path.string() + ": non-positive dimension");
    h.dims[a] = static_cast<std::uint32_t>(d);
    const float px = f32(80 + 4 * a);
    // Files with unset spacing are common; treat them as 1 mm.
    h.voxel_size[a] = (px > 0.0f && std::isfinite(px)) ? px : 1.0f;
  }
  for (int a = 3; a < ndim; ++a)
    if (i16(42 + 2 * a) > 1) throw UnsupportedError(path.string() + ": only 3D volumes are supported");

  const int datatype = i16(70);
  std::size_t bytes_per_voxel = 0;
  switch (datatype) {
    case kDtUint8: bytes_per_voxel = 1; break;
    case kDtInt16: bytes_per_voxel = 2; break;
    case kDtFloat32: bytes_per_voxel = 4; break;
    default: throw UnsupportedError(path.string() + ": unsupported NIfTI datatype " + std::to_string(datatype));
  }

  const float slope = f32(112);
  const float inter = f32(116);
  const bool scaled = slope != 0.0f && std::isfinite(slope) && !(slope == 1.0f && inter == 0.0f);

  std::vector<unsigned char> img_file;
  const unsigned char* payload = nullptr;
  std::size_t available = 0;
  const auto vox_offset = static_cast<std::size_t>(std::max(0.0f, f32(108)));
  if (single_file) {
    if (vox_offset > file.size()) throw FormatError(path.string() + ": vox_offset beyond end of file");
    payload = file.data() + vox_offset;
    available = file.size() - vox_offset;
  } else {
    auto img_path = path;
    img_path.replace_extension(".img");
    img_file = slurp(img_path);
    if (vox_offset > img_file.size()) throw FormatError(img_path.string() + ": vox_offset beyond end of file");
    payload = img_file.data() + vox_offset;
    available = img_file.size() - vox_offset;
  }
  const std::size_t n = h.num_voxels();
  if (available < n * bytes_per_voxel) throw FormatError(path.string() + ": truncated voxel data");

  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* p = payload + i * bytes_per_voxel;
    double raw = 0.0;
    switch (datatype) {
      case kDtUint8: raw = p[0]; break;
      case kDtInt16: raw = static_cast<std::int16_t>(load_u16(p, swap)); break;
      default: raw = std::bit_cast<float>(load_u32(p, swap)); break;
    }
    if (slope != 0.0f && std::isfinite(slope)) raw = raw * slope + inter;
    values[i] = raw;
  }

  const bool as_label =
      target == NiftiTarget::Label || (target == NiftiTarget::Auto && datatype == kDtUint8 && !scaled);
  if (as_label) {
    LabelVolume v(h, 1);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = std::round(values[i]);
      if (r < 0.0 || r > 255.0 || r != values[i])
        throw FormatError(path.string() + ": voxel value is not a label in 0..255");
      v.data[i] = static_cast<std::uint8_t>(r);
      max_label = std::max(max_label, static_cast<int>(v.data[i]));
    }
    v.num_classes = std::max(1, max_label);
    return v;
  }
  ScalarVolume v(h);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(values[i])) throw FormatError(path.string() + ": non-finite voxel value");
    v.data[i] = static_cast<float>(values[i]);
  }
  return v;
}

}  // namespace camelion
