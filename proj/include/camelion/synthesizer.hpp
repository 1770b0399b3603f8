#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "camelion/volume.hpp"

namespace camelion {

enum class SynthBackend : std::uint8_t { Linear = 1, Regressor = 2 };

struct SynthConfig {
  SynthBackend backend = SynthBackend::Linear;
  int patch_radius = 1;
  int hidden_units = 64;
  int epochs = 20;
  int batch_size = 1024;
  double learning_rate = 0.001;
  std::uint64_t seed = 7;
  bool inject_noise = true;  // add N(0, sigma^2) to synthesized atlas images

  void validate() const;
};

/// Feed-forward patch regressor: flattened zero-padded PV patch, standardized,
/// into one tanh hidden layer plus a direct linear path to the output.
struct PatchRegressor {
  int patch_radius = 1;
  int hidden_units = 64;
  std::vector<double> input_mean;   // per input feature
  std::vector<double> input_scale;  // per input feature, > 0
  double target_mean = 0.0;
  double target_scale = 1.0;
  std::vector<double> hidden_weights;  // hidden x inputs, row-major
  std::vector<double> hidden_bias;     // hidden
  std::vector<double> output_weights;  // hidden
  std::vector<double> skip_weights;    // inputs
  double output_bias = 0.0;

  int inputs() const { return static_cast<int>(input_mean.size()); }
  bool operator==(const PatchRegressor&) const = default;
};

struct SynthModel {
  SynthBackend backend = SynthBackend::Linear;
  int num_classes = kNumTissueClasses;
  std::vector<double> intensities;  // linear backend: synthesized intensity per class
  PatchRegressor regressor;         // regressor backend
  double train_mse = 0.0;

  bool operator==(const SynthModel&) const = default;
};

/// Least-squares class intensities from the K x K normal equations over
/// tissue voxels. RankError (with per-class support counts) if singular.
SynthModel fit_linear(const PartialVolumeSet& pv, const ScalarVolume& image);

/// Mini-batch Adam fit of the patch regressor. The direct linear path starts
/// at the least-squares solution and the returned weights are those with the
/// lowest full-data loss seen (including the starting point).
SynthModel fit_regressor(const PartialVolumeSet& pv, const ScalarVolume& image, const SynthConfig& cfg);

/// Dispatches on cfg.backend.
SynthModel fit_synth(const PartialVolumeSet& pv, const ScalarVolume& image, const SynthConfig& cfg);

/// Renders an intensity image from partial volumes; background voxels are 0.
ScalarVolume synthesize(const SynthModel& model, const PartialVolumeSet& pv);

/// Mean squared difference over tissue voxels of `pv`.
double tissue_mse(const ScalarVolume& a, const ScalarVolume& b, const PartialVolumeSet& pv);

/// Adds counter-based N(0, sigma^2) noise at tissue voxels.
void add_noise(ScalarVolume& image, const PartialVolumeSet& pv, double sigma, std::uint64_t seed);

void write_synth(std::ostream& out, const SynthModel& m);
SynthModel read_synth(std::istream& in);
void write_synth(const SynthModel& m, const std::filesystem::path& path);
SynthModel read_synth(const std::filesystem::path& path);

}  // namespace camelion
