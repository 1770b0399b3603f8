#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "camelion/config.hpp"
#include "camelion/metrics.hpp"
#include "camelion/phantom.hpp"
#include "camelion/pipeline.hpp"

namespace camelion {

struct TestSubject {
  std::string id;
  ScalarVolume image_a;
  ScalarVolume image_b;
  LabelVolume truth;
};

/// Protocol-A atlas pairs (with precomputed PVs) and the held-out subjects.
struct Cohort {
  std::vector<AtlasPair> atlases;
  std::vector<TestSubject> tests;
};

/// Builds the cohort in memory, exactly as generate_cohort would write it.
Cohort make_cohort(const RunConfig& cfg);
/// Reads a cohort written by generate_cohort.
Cohort load_cohort(const Manifest& manifest, const RunConfig& cfg);

struct ArmOutput {
  LabelVolume labels;
  std::optional<LoopResult> loop;  // camelion arm only
};

/// Runs one comparison arm on `input`. `atlases` must carry precomputed PVs
/// for the camelion arm to skip recomputing them.
ArmOutput run_arm(Method method, const ScalarVolume& input, const std::vector<AtlasPair>& atlases, const RunConfig& cfg,
                  const LabelVolume* truth = nullptr);

/// Protocol-A direct segmentation, the cross-protocol reference.
LabelVolume reference_segmentation(const TestSubject& subject, const std::vector<AtlasPair>& atlases,
                                   const RunConfig& cfg);

MethodReport make_report(const std::string& subject_id, Method method, const LabelVolume& labels,
                         const LabelVolume& truth, const LabelVolume& reference);

/// Per class and method: Pearson r between method volumes and reference
/// volumes across subjects. Rows with zero-variance samples are skipped.
/// Empty when fewer than three subjects are present.
std::vector<CorrelationRow> volume_correlations(const std::vector<MethodReport>& reports, const std::vector<int>& classes);

/// Whole comparison run in memory; used by the acceptance suite.
struct ExperimentResult {
  std::vector<MethodReport> reports;
  std::vector<CorrelationRow> correlations;
  std::vector<LoopResult> loops;  // one per test subject, in cohort order
};
ExperimentResult run_experiment(const Cohort& cohort, const RunConfig& cfg);

/// Output layout of the `run` command: <runs>/<subject>/<method>/.
std::filesystem::path arm_dir(const std::filesystem::path& runs, const std::string& subject, Method method);

/// Runs one arm for one manifest subject and writes labels.mvf (and, for the
/// camelion arm, the per-iteration artifacts).
void run_subject(const Manifest& manifest, const Cohort& cohort, const std::string& subject, Method method,
                 const RunConfig& cfg, const std::filesystem::path& runs);

struct EvalOutput {
  std::vector<MethodReport> reports;
  std::vector<CorrelationRow> correlations;
  std::size_t subjects = 0;
};

/// Reads every completed arm under `runs` and writes dice.csv and, when at
/// least three subjects are present, correlations.csv into `out`.
EvalOutput evaluate_runs(const Cohort& cohort, const RunConfig& cfg,
                         const std::filesystem::path& runs, const std::filesystem::path& out);

}  // namespace camelion
