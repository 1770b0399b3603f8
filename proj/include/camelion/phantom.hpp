#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "camelion/volume.hpp"

namespace camelion {

struct PhantomParams {
  std::array<std::uint32_t, 3> base_dims{48, 48, 48};
  std::array<float, 3> voxel_size{1.0f, 1.0f, 1.0f};  // low-res spacing in mm
  int supersample = 4;
  std::uint64_t seed = 1;
  double shape_jitter = 0.05;

  void validate() const;
};

/// Acquisition-protocol forward model parameters.
struct ProtocolParams {
  std::vector<double> class_means;  // one per tissue class, label order
  double noise_sigma = 3.0;
  double gamma = 1.0;
  double bias_amplitude = 0.0;

  void validate() const;
};

/// MPRAGE-like defaults: CSF 25, ventricle 15, GM 60, WM 100, brainstem 80.
ProtocolParams default_protocol_a();
/// SPGR-like defaults with compressed GM/WM contrast, gamma 0.7 and a 10% bias field.
ProtocolParams default_protocol_b();

/// Nested-shell head at base_dims * supersample: CSF rim, folded gray-matter
/// ribbon, white-matter core holding two ventricles, and a brainstem column
/// running inferiorly. Deterministic in (params.seed, subject_index).
LabelVolume generate_label_phantom(const PhantomParams& params, int subject_index);

/// Box-downsamples hard labels into tissue fractions. A low-res voxel is
/// background when less than half of its subvoxels carry tissue; otherwise
/// the tissue counts are renormalized to sum to one.
PartialVolumeSet downsample_to_pv(const LabelVolume& hr, int factor);

/// Keeps the two largest fractions of every voxel (ties to the smaller class)
/// and renormalizes them.
PartialVolumeSet truncate_to_two_classes(const PartialVolumeSet& pv);

/// Per-voxel argmax; ties go to the smaller class, all-zero voxels to background.
LabelVolume pv_to_labels(const PartialVolumeSet& pv);

/// Smooth multiplicative field 1 + amplitude * s(x, y, z), |s| <= 1.
double bias_field(const VolumeHeader& h, std::size_t x, std::size_t y, std::size_t z, double amplitude);

/// f = g(b * sum_k p_k c_k) + noise, with g(x) = x_max (x / x_max)^gamma,
/// x_max the largest class mean. Background voxels are exactly 0 (the images
/// model skull-stripped data). Noise is counter-based per voxel.
ScalarVolume render(const PartialVolumeSet& pv, const ProtocolParams& proto, std::uint64_t seed);

/// Render without noise; the deterministic part of render().
ScalarVolume render_noiseless(const PartialVolumeSet& pv, const ProtocolParams& proto);

enum class SubjectRole { Atlas, Test };

struct ManifestEntry {
  std::string id;
  SubjectRole role = SubjectRole::Atlas;
  std::filesystem::path image_a;   // protocol A rendering
  std::filesystem::path image_b;   // protocol B rendering
  std::filesystem::path labels;    // ground-truth hard labels
  std::filesystem::path pv;        // ground-truth partial volumes
};

struct Manifest {
  std::filesystem::path root;  // directory the relative paths resolve against
  std::vector<ManifestEntry> subjects;

  std::vector<const ManifestEntry*> with_role(SubjectRole role) const;
  const ManifestEntry& find(const std::string& id) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const { return root / p; }
};

/// Truth data for one subject, in memory.
struct PhantomSubject {
  LabelVolume labels;
  PartialVolumeSet pv;
  ScalarVolume image_a;
  ScalarVolume image_b;
};

/// Builds one subject: high-res labels, downsampled and top-2 truncated PVs,
/// and renderings under both protocols.
PhantomSubject make_subject(const PhantomParams& params, int subject_index, const ProtocolParams& proto_a,
                            const ProtocolParams& proto_b);

/// Writes atlas_000.., test_000.. subjects and manifest.json under out_dir.
/// Subject indices run atlases first, then tests.
Manifest generate_cohort(const PhantomParams& params, int n_atlas, int n_test, const ProtocolParams& proto_a,
                         const ProtocolParams& proto_b, const std::filesystem::path& out_dir);

void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

std::string to_string(SubjectRole r);

}  // namespace camelion
