#include "camelion/harmonizer.hpp"

#include <algorithm>
#include <cmath>

#include "camelion/error.hpp"

namespace camelion {

std::vector<double> default_percentiles() { return {1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 99}; }

double LandmarkMap::operator()(double x) const {
  const std::size_t n = source.size();
  // Segment index: first segment for x below the span, last one above it.
  std::size_t seg = 0;
  if (x >= source[n - 1]) {
    seg = n - 2;
  } else if (x > source[0]) {
    seg = static_cast<std::size_t>(std::upper_bound(source.begin(), source.end(), x) - source.begin()) - 1;
    seg = std::min(seg, n - 2);
  }
  const double x0 = source[seg], x1 = source[seg + 1];
  const double y0 = reference[seg], y1 = reference[seg + 1];
  return y0 + (x - x0) * (y1 - y0) / (x1 - x0);
}

std::vector<char> foreground_mask(const ScalarVolume& image, const LabelVolume* labels) {
  std::vector<char> mask(image.size(), 0);
  if (labels != nullptr) {
    require_same_header(image.header, labels->header, "foreground_mask");
    for (std::size_t j = 0; j < mask.size(); ++j) mask[j] = labels->data[j] != 0;
  } else {
    for (std::size_t j = 0; j < mask.size(); ++j) mask[j] = image.data[j] > 0.0f;
  }
  return mask;
}

std::vector<double> landmarks(const ScalarVolume& image, const std::vector<char>& mask,
                              const std::vector<double>& percentiles) {
  if (mask.size() != image.size()) throw ArgumentError("landmarks: mask size does not match the image");
  for (std::size_t i = 0; i < percentiles.size(); ++i) {
    if (!(percentiles[i] > 0.0 && percentiles[i] < 100.0)) throw ArgumentError("landmarks: percentiles must lie in (0, 100)");
    if (i > 0 && !(percentiles[i] > percentiles[i - 1]))
      throw ArgumentError("landmarks: percentiles must be strictly increasing");
  }
  std::vector<double> values;
  for (std::size_t j = 0; j < image.size(); ++j)
    if (mask[j]) values.push_back(image.data[j]);
  if (values.empty()) throw ArgumentError("landmarks: mask is empty");
  if (values.size() < 100) throw ArgumentError("landmarks: mask has fewer than 100 voxels");
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  out.reserve(percentiles.size());
  const double last = static_cast<double>(values.size() - 1);
  for (double p : percentiles) {
    const double pos = p / 100.0 * last;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double t = pos - static_cast<double>(lo);
    out.push_back(values[lo] + t * (values[hi] - values[lo]));
  }
  return out;
}

LandmarkMap build_map(const std::vector<double>& source, const std::vector<double>& reference,
                      const std::vector<double>& percentiles) {
  if (source.size() != reference.size()) throw ArgumentError("build_map: landmark lists differ in length");
  if (source.size() < 2) throw ArgumentError("build_map: need at least two landmarks");
  if (!percentiles.empty() && percentiles.size() != source.size())
    throw ArgumentError("build_map: percentile list length does not match the landmarks");
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (!std::isfinite(source[i]) || !std::isfinite(reference[i])) throw ArgumentError("build_map: non-finite landmark");
    if (i == 0) continue;
    if (source[i] < source[i - 1] || reference[i] < reference[i - 1])
      throw ArgumentError("build_map: landmark lists must be nondecreasing");
    if (source[i] == source[i - 1]) throw ArgumentError("build_map: repeated source landmark gives a zero-width segment");
  }
  return {source, reference, percentiles};
}

ScalarVolume apply(const LandmarkMap& map, const ScalarVolume& image, const std::vector<char>& mask) {
  if (mask.size() != image.size()) throw ArgumentError("apply: mask size does not match the image");
  ScalarVolume out = image;
  for (std::size_t j = 0; j < image.size(); ++j)
    if (mask[j]) out.data[j] = static_cast<float>(map(image.data[j]));
  return out;
}

ScalarVolume match_histogram(const ScalarVolume& image, const ScalarVolume& reference,
                             const LabelVolume& reference_labels, const std::vector<double>& percentiles) {
  const auto src_mask = foreground_mask(image);
  const auto ref_mask = foreground_mask(reference, &reference_labels);
  const auto map = build_map(landmarks(image, src_mask, percentiles), landmarks(reference, ref_mask, percentiles),
                             percentiles);
  return apply(map, image, src_mask);
}

}  // namespace camelion
