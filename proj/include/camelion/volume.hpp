#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace camelion {

/// Number of non-background tissue classes used throughout the toolkit.
inline constexpr int kNumTissueClasses = 5;

/// Tissue label values. 0 is background.
enum class Tissue : std::uint8_t {
  Background = 0,
  Csf = 1,
  Ventricle = 2,
  GrayMatter = 3,
  WhiteMatter = 4,
  Brainstem = 5,
};

/// Short name used in reports ("csf", "ventricle", "gm", "wm", "brainstem").
std::string class_name(int label);

/// Grid geometry: voxel counts and voxel spacing in mm.
struct VolumeHeader {
  std::array<std::uint32_t, 3> dims{1, 1, 1};
  std::array<float, 3> voxel_size{1.0f, 1.0f, 1.0f};

  std::size_t num_voxels() const {
    return std::size_t{dims[0]} * dims[1] * dims[2];
  }
  double voxel_volume() const {
    return double{voxel_size[0]} * voxel_size[1] * voxel_size[2];
  }
  /// Linear index, x fastest.
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + dims[0] * (y + dims[1] * z);
  }
  /// Throws ArgumentError unless dims >= 1 and spacings are positive and finite.
  void validate() const;

  bool operator==(const VolumeHeader&) const = default;
};

/// Throws ArgumentError naming `what` when the two headers differ.
void require_same_header(const VolumeHeader& a, const VolumeHeader& b, const char* what);

struct ScalarVolume {
  VolumeHeader header;
  std::vector<float> data;

  ScalarVolume() = default;
  explicit ScalarVolume(const VolumeHeader& h, float fill = 0.0f)
      : header(h), data(h.num_voxels(), fill) {}

  float& operator[](std::size_t i) { return data[i]; }
  float operator[](std::size_t i) const { return data[i]; }
  std::size_t size() const { return data.size(); }

  /// Checks length and finiteness.
  void validate() const;

  bool operator==(const ScalarVolume&) const = default;
};

struct LabelVolume {
  VolumeHeader header;
  std::vector<std::uint8_t> data;
  int num_classes = kNumTissueClasses;

  LabelVolume() = default;
  explicit LabelVolume(const VolumeHeader& h, int k = kNumTissueClasses, std::uint8_t fill = 0)
      : header(h), data(h.num_voxels(), fill), num_classes(k) {}

  std::uint8_t& operator[](std::size_t i) { return data[i]; }
  std::uint8_t operator[](std::size_t i) const { return data[i]; }
  std::size_t size() const { return data.size(); }

  /// Checks length and that every value lies in {0..num_classes}.
  void validate() const;
  /// Per-label voxel counts, index 0 = background.
  std::vector<std::size_t> counts() const;

  bool operator==(const LabelVolume&) const = default;
};

/// K channels of partial-volume fractions, stored channel-major.
/// Channel c (0-based) holds the fraction of tissue label c + 1.
struct PartialVolumeSet {
  VolumeHeader header;
  int num_classes = kNumTissueClasses;
  std::vector<float> data;

  PartialVolumeSet() = default;
  PartialVolumeSet(const VolumeHeader& h, int k)
      : header(h), num_classes(k), data(h.num_voxels() * static_cast<std::size_t>(k), 0.0f) {}

  std::span<float> channel(int c) {
    return {data.data() + static_cast<std::size_t>(c) * header.num_voxels(), header.num_voxels()};
  }
  std::span<const float> channel(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * header.num_voxels(), header.num_voxels()};
  }
  float& at(int c, std::size_t voxel) { return data[static_cast<std::size_t>(c) * header.num_voxels() + voxel]; }
  float at(int c, std::size_t voxel) const {
    return data[static_cast<std::size_t>(c) * header.num_voxels() + voxel];
  }
  /// True when every channel is zero at `voxel`.
  bool is_background(std::size_t voxel) const;

  bool operator==(const PartialVolumeSet&) const = default;
};

struct PvValidationOptions {
  double sum_tolerance = 1e-6;
  bool require_at_most_two = true;
};

/// Returns an empty string when `pv` satisfies the range, sum-to-one and
/// support invariants, otherwise a description of the first violation.
std::string check_partial_volumes(const PartialVolumeSet& pv, const PvValidationOptions& opts = {});
/// Throws ArgumentError carrying the check_partial_volumes message.
void validate_partial_volumes(const PartialVolumeSet& pv, const PvValidationOptions& opts = {});

struct AtlasPair {
  ScalarVolume image;
  LabelVolume labels;
  std::optional<PartialVolumeSet> precomputed_pv;

  /// Throws ArgumentError unless all members share one header.
  void validate() const;
};

/// FNV-1a over header and payload bytes; used to assert that inputs are not mutated.
std::uint64_t checksum(const ScalarVolume& v);
std::uint64_t checksum(const LabelVolume& v);

}  // namespace camelion
