#pragma once

#include <vector>

#include "camelion/volume.hpp"

namespace camelion {

/// Decile landmark scheme: 1, 10, 20, ..., 90, 99.
std::vector<double> default_percentiles();

/// Piecewise-linear intensity map between corresponding landmarks.
struct LandmarkMap {
  std::vector<double> source;
  std::vector<double> reference;
  std::vector<double> percentiles;  // informational; may be empty

  /// Interpolates between landmarks and extrapolates with the end-segment slopes.
  double operator()(double x) const;
};

/// Foreground mask: non-background voxels of `labels` when given, else intensity > 0.
std::vector<char> foreground_mask(const ScalarVolume& image, const LabelVolume* labels = nullptr);

/// Linearly interpolated percentiles (closest-rank positions p/100 * (n-1))
/// of the masked intensities. Needs at least 100 masked voxels.
std::vector<double> landmarks(const ScalarVolume& image, const std::vector<char>& mask,
                              const std::vector<double>& percentiles);

/// Validates and pairs landmark lists. ArgumentError on unequal or short
/// lists, decreasing values, or a zero-width source segment.
LandmarkMap build_map(const std::vector<double>& source, const std::vector<double>& reference,
                      const std::vector<double>& percentiles = {});

/// Applies the map to masked voxels; the rest are copied unchanged.
ScalarVolume apply(const LandmarkMap& map, const ScalarVolume& image, const std::vector<char>& mask);

/// Convenience: matches `image` (foreground by intensity) to `reference`
/// (foreground by its labels) over the given percentiles.
ScalarVolume match_histogram(const ScalarVolume& image, const ScalarVolume& reference,
                             const LabelVolume& reference_labels, const std::vector<double>& percentiles);

}  // namespace camelion
