#include "camelion/pipeline.hpp"

#include <cstdio>

#include "camelion/harmonizer.hpp"
#include "camelion/mvf.hpp"
#include "camelion/random.hpp"

namespace camelion {

void LoopConfig::validate() const {
  if (max_iterations < 1) throw ArgumentError("loop max_iterations must be >= 1");
  if (!(change_threshold > 0.0 && change_threshold < 1.0)) throw ArgumentError("loop change_threshold must lie in (0, 1)");
  pv.validate();
  synth.validate();
}

PipelineError::PipelineError(std::string stage, int iteration, const std::string& cause, LoopResult partial)
    : Error("stage '" + stage + "' failed at iteration " + std::to_string(iteration) + ": " + cause),
      stage_(std::move(stage)),
      iteration_(iteration),
      partial_(std::move(partial)) {}

std::vector<AtlasPair> precompute_atlas_pv(std::vector<AtlasPair> atlases, const PvConfig& cfg) {
  for (auto& a : atlases) {
    a.validate();
    a.precomputed_pv = estimate_pv(a.image, a.labels, cfg);
  }
  return atlases;
}

namespace {

void check_inputs(const ScalarVolume& input, const std::vector<AtlasPair>& atlases) {
  if (atlases.empty()) throw ArgumentError("at least one atlas is required");
  input.validate();
  for (const auto& a : atlases) require_same_header(input.header, a.image.header, "input vs atlas");
}

std::vector<double> dice_all(const LabelVolume& labels, const LabelVolume& truth) {
  std::vector<double> d;
  for (int c = 1; c <= labels.num_classes; ++c) d.push_back(dice(labels, truth, c));
  return d;
}

}  // namespace

LoopResult run(const ScalarVolume& input, const std::vector<AtlasPair>& atlases, const LoopConfig& cfg,
               const LabelVolume* truth) {
  cfg.validate();
  check_inputs(input, atlases);
  if (truth != nullptr) require_same_header(input.header, truth->header, "input vs truth");

  LoopResult result;
  std::string stage = "atlas-pv";
  int iteration = 0;
  try {
    std::vector<AtlasPair> current = atlases;
    for (auto& a : current)
      if (!a.precomputed_pv) a.precomputed_pv = estimate_pv(a.image, a.labels, cfg.pv);
    const auto foreground = foreground_mask(input);

    stage = "segmenter-train";
    SegmenterModel model = train(current, cfg.seg);
    stage = "segmenter-predict";
    SegOutput seg = predict(model, input, &foreground);
    result.outside_prior = seg.outside_prior;
    result.labels.push_back(std::move(seg.labels));
    if (truth != nullptr) result.report.dice_trajectory.push_back(dice_all(result.labels.back(), *truth));

    for (iteration = 1; iteration <= cfg.max_iterations; ++iteration) {
      const LabelVolume& previous = result.labels.back();

      stage = "pv-estimate";
      PvModel pv_model;
      const PartialVolumeSet input_pv = estimate_pv(input, previous, cfg.pv, pv_model);

      stage = "synth-fit";
      SynthModel synth = fit_synth(input_pv, input, cfg.synth);

      stage = "synthesize";
      std::vector<ScalarVolume> images;
      for (std::size_t i = 0; i < current.size(); ++i) {
        ScalarVolume img = synthesize(synth, *current[i].precomputed_pv);
        if (cfg.synth.inject_noise)
          add_noise(img, *current[i].precomputed_pv, pv_model.noise_sigma,
                    hash_counter(cfg.seed, (static_cast<std::uint64_t>(iteration) << 32) | i));
        current[i].image = img;
        images.push_back(std::move(img));
      }

      stage = "segmenter-train";
      model = warm_start(train(current, cfg.seg), model);
      stage = "segmenter-predict";
      SegOutput next = predict(model, input, &foreground);

      const double change = label_change_fraction(previous, next.labels);
      result.report.label_change_fraction.push_back(change);
      result.synth_summaries.push_back({synth.backend, synth.train_mse, synth.intensities});
      result.synth_models.push_back(std::move(synth));
      result.atlas_images.push_back(std::move(images));
      result.labels.push_back(std::move(next.labels));
      result.report.iterations_run = iteration;
      if (truth != nullptr) result.report.dice_trajectory.push_back(dice_all(result.labels.back(), *truth));
      if (change < cfg.change_threshold) {
        result.converged = true;
        break;
      }
    }
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(stage, iteration, e.what(), std::move(result));
  }

  if (truth != nullptr) result.report.dice = result.report.dice_trajectory.back();
  result.report.volume_mm3 = volumes(result.final_labels());
  return result;
}

LabelVolume run_direct(const ScalarVolume& input, const std::vector<AtlasPair>& atlases, const LoopConfig& cfg) {
  check_inputs(input, atlases);
  const auto foreground = foreground_mask(input);
  return predict(train(atlases, cfg.seg), input, &foreground).labels;
}

LabelVolume run_nhm(const ScalarVolume& input, const std::vector<AtlasPair>& atlases, int reference_atlas,
                    const LoopConfig& cfg, const std::vector<double>& percentiles) {
  check_inputs(input, atlases);
  if (reference_atlas < 0 || static_cast<std::size_t>(reference_atlas) >= atlases.size())
    throw ArgumentError("reference atlas index out of range");
  const auto& ref = atlases[static_cast<std::size_t>(reference_atlas)];
  const auto foreground = foreground_mask(input);
  const ScalarVolume matched = match_histogram(input, ref.image, ref.labels, percentiles);
  return predict(train(atlases, cfg.seg), matched, &foreground).labels;
}

void write_loop_artifacts(const LoopResult& result, const std::vector<int>& classes, const std::filesystem::path& dir) {
  try {
    std::filesystem::create_directories(dir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError(std::string("cannot create output directory: ") + e.what());
  }
  char name[64];
  for (std::size_t t = 0; t < result.labels.size(); ++t) {
    std::snprintf(name, sizeof name, "labels_%zu.mvf", t);
    write_mvf(result.labels[t], dir / name);
  }
  for (std::size_t t = 0; t < result.atlas_images.size(); ++t) {
    for (std::size_t i = 0; i < result.atlas_images[t].size(); ++i) {
      std::snprintf(name, sizeof name, "atlas%zu_%zu.mvf", i, t + 1);
      write_mvf(result.atlas_images[t][i], dir / name);
    }
    std::snprintf(name, sizeof name, "synth_%zu.bin", t + 1);
    write_synth(result.synth_models[t], dir / name);
  }
  write_trajectory(result.report, classes, dir / "trajectory.csv");
}

}  // namespace camelion
