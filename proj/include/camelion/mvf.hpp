#pragma once

// MVF: the canonical little-endian on-disk form of every volume type.
//
//   offset  size  field
//   0       4     magic "MVF1"
//   4       1     kind (1 = scalar, 2 = label, 3 = partial volumes)
//   5       1     K (label: num_classes, pv: channel count, scalar: 0)
//   6       12    dims, 3 x u32
//   18      12    voxel_size, 3 x f32
//   30      ...   payload: scalar f32 per voxel | label u8 per voxel |
//                 pv K planes of f32, channel-major

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <variant>

#include "camelion/volume.hpp"

namespace camelion {

inline constexpr std::size_t kMvfHeaderBytes = 30;

enum class MvfKind : std::uint8_t { Scalar = 1, Label = 2, PartialVolume = 3 };

using AnyVolume = std::variant<ScalarVolume, LabelVolume, PartialVolumeSet>;

void write_mvf(std::ostream& out, const ScalarVolume& v);
void write_mvf(std::ostream& out, const LabelVolume& v);
void write_mvf(std::ostream& out, const PartialVolumeSet& v);
AnyVolume read_mvf(std::istream& in);

void write_mvf(const ScalarVolume& v, const std::filesystem::path& path);
void write_mvf(const LabelVolume& v, const std::filesystem::path& path);
void write_mvf(const PartialVolumeSet& v, const std::filesystem::path& path);
AnyVolume read_mvf(const std::filesystem::path& path);

/// Typed readers; FormatError when the stored kind differs.
ScalarVolume read_scalar_mvf(const std::filesystem::path& path);
LabelVolume read_label_mvf(const std::filesystem::path& path);
PartialVolumeSet read_pv_mvf(const std::filesystem::path& path);

}  // namespace camelion
