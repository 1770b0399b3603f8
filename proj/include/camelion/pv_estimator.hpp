#pragma once

#include <vector>

#include "camelion/volume.hpp"

namespace camelion {

enum class SigmaMode {
  Pooled,       ///< one standard deviation over all tissue voxels
  PerClassMin,  ///< smallest per-class standard deviation
};

struct PvConfig {
  /// Pure-tissue prior strength, expressed relative to the data term:
  /// the prior weight handed to map_alpha is beta / (2 sigma^2).
  double beta = 0.1;
  SigmaMode sigma_mode = SigmaMode::Pooled;
  double grid_oracle_step = 1e-4;  // used by tests only

  void validate() const;
};

struct PvModel {
  std::vector<double> class_means;
  double noise_sigma = 1.0;
  LabelVolume second_class;
};

/// Mean intensity of each labelled class. EstimationError names an empty class.
std::vector<double> class_means(const ScalarVolume& image, const LabelVolume& labels);

/// Standard deviation of f - c_label over tissue voxels whose in-grid
/// 6-neighbours all share their label (so partial-volume boundaries do not
/// inflate the estimate); falls back to all tissue voxels when there are no
/// such voxels. Floored at 1e-3 of the image intensity range.
double noise_sigma(const ScalarVolume& image, const LabelVolume& labels, const std::vector<double>& means,
                   SigmaMode mode = SigmaMode::Pooled);

/// For every tissue voxel, the label of the nearest tissue voxel (Euclidean,
/// scaled by voxel size) whose label differs. Exact ties go to the smaller
/// label; background maps to 0. GeometryError if fewer than two classes occur.
LabelVolume second_class_map(const LabelVolume& labels);

/// Objective minimized by map_alpha; exposed for oracles.
double map_objective(double alpha, double f, double c_a, double c_b, double sigma, double beta);

/// MAP fraction of class a in a two-class mixture f ~ alpha c_a + (1-alpha) c_b
/// with Gaussian noise sigma and pure-tissue prior beta. Ties favour larger alpha.
double map_alpha(double f, double c_a, double c_b, double sigma, double beta);

/// Two-class MAP partial volume estimation driven by a hard segmentation.
PartialVolumeSet estimate_pv(const ScalarVolume& image, const LabelVolume& labels, const PvConfig& cfg);

/// Same, also returning the fitted model.
PartialVolumeSet estimate_pv(const ScalarVolume& image, const LabelVolume& labels, const PvConfig& cfg,
                             PvModel& model_out);

}  // namespace camelion
