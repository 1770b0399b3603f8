#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "camelion/volume.hpp"

namespace camelion {

enum class SegBackend : std::uint8_t { Gaussian = 1 };

struct SegmenterConfig {
  SegBackend backend = SegBackend::Gaussian;
  double prior_epsilon = 0.01;
  double smoothing_weight = 0.5;  // 0 disables the ICM pass
  int prior_radius = 3;           // half-width of the box filter applied to atlas label frequencies
};

/// Gaussian intensity classes with an atlas-frequency spatial prior.
struct SegmenterModel {
  SegBackend backend = SegBackend::Gaussian;
  std::vector<double> means;      // per class, label order
  std::vector<double> variances;  // per class
  PartialVolumeSet prior;         // K channels of class frequencies; all zero outside the brain mask
  double prior_epsilon = 0.01;
  double smoothing_weight = 0.5;

  int num_classes() const { return static_cast<int>(means.size()); }
  bool operator==(const SegmenterModel&) const = default;
};

struct SegOutput {
  LabelVolume labels;
  PartialVolumeSet posteriors;       // K channels; zero outside the segmented region
  std::size_t outside_prior = 0;     // foreground voxels dropped because no atlas covers them
};

/// Fraction of atlases carrying each label at each voxel (before smoothing).
PartialVolumeSet label_frequency(std::span<const AtlasPair> atlases);

/// Pools per-class intensity statistics over all atlases and builds the
/// smoothed, floored spatial prior. Throws TrainingError naming any class that
/// no atlas contains.
SegmenterModel train(std::span<const AtlasPair> atlases, const SegmenterConfig& cfg);

/// Bayes classification with the atlas prior, followed by one synchronous ICM
/// pass when smoothing_weight > 0. Voxels outside the prior mask or outside
/// the foreground are labeled 0. Without an explicit foreground mask, voxels
/// with positive intensity are foreground (skull-stripped input).
SegOutput predict(const SegmenterModel& model, const ScalarVolume& image,
                  const std::vector<char>* foreground = nullptr);

/// Interface parity with iteratively trained backends. For the Gaussian
/// backend the fresh statistics are exact, so `model` is returned unchanged.
SegmenterModel warm_start(const SegmenterModel& model, const SegmenterModel& previous);

void write_segmenter(std::ostream& out, const SegmenterModel& m);
SegmenterModel read_segmenter(std::istream& in);
void write_segmenter(const SegmenterModel& m, const std::filesystem::path& path);
SegmenterModel read_segmenter(const std::filesystem::path& path);

}  // namespace camelion
