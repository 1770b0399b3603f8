#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "camelion/error.hpp"
#include "camelion/metrics.hpp"
#include "camelion/pv_estimator.hpp"
#include "camelion/segmenter.hpp"
#include "camelion/synthesizer.hpp"
#include "camelion/volume.hpp"

namespace camelion {

struct LoopConfig {
  int max_iterations = 5;
  double change_threshold = 0.05;
  SegmenterConfig seg;
  SynthConfig synth;
  PvConfig pv;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthSummary {
  SynthBackend backend = SynthBackend::Linear;
  double train_mse = 0.0;
  std::vector<double> intensities;  // linear backend only
};

struct LoopResult {
  /// L(0) .. L(n); labels.size() == iterations_run + 1.
  std::vector<LabelVolume> labels;
  /// F_A(t) for t = 1..n: atlas_images[t-1][i] is atlas i after iteration t.
  std::vector<std::vector<ScalarVolume>> atlas_images;
  std::vector<SynthModel> synth_models;
  std::vector<SynthSummary> synth_summaries;
  EvalReport report;
  bool converged = false;
  std::size_t outside_prior = 0;  // foreground voxels of the input not covered by any atlas

  const LabelVolume& final_labels() const { return labels.back(); }
  int iterations_run() const { return report.iterations_run; }
};

/// Loop failure tagged with the stage and iteration it happened in. Carries
/// everything computed before the failure.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, int iteration, const std::string& cause, LoopResult partial);
  const std::string& stage() const { return stage_; }
  int iteration() const { return iteration_; }
  const LoopResult& partial() const { return partial_; }

 private:
  std::string stage_;
  int iteration_;
  LoopResult partial_;
};

/// Estimates partial volumes of every atlas from its original image and labels.
std::vector<AtlasPair> precompute_atlas_pv(std::vector<AtlasPair> atlases, const PvConfig& cfg);

/// Alternating segmentation / synthesis. Atlas labels and the input image stay
/// fixed; only the atlas images are replaced. Atlases without precomputed PVs
/// get them here. When `truth` is given the trajectory records Dice per class.
LoopResult run(const ScalarVolume& input, const std::vector<AtlasPair>& atlases, const LoopConfig& cfg,
               const LabelVolume* truth = nullptr);

/// Segments with the original atlases, no adaptation.
LabelVolume run_direct(const ScalarVolume& input, const std::vector<AtlasPair>& atlases, const LoopConfig& cfg);

/// Histogram-matches the input to one atlas image, then segments directly.
LabelVolume run_nhm(const ScalarVolume& input, const std::vector<AtlasPair>& atlases, int reference_atlas,
                    const LoopConfig& cfg, const std::vector<double>& percentiles);

/// Writes labels_t.mvf, atlas{i}_t.mvf, synth_t.bin and trajectory.csv.
void write_loop_artifacts(const LoopResult& result, const std::vector<int>& classes,
                          const std::filesystem::path& dir);

}  // namespace camelion
