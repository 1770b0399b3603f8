#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "camelion/volume.hpp"

namespace camelion {

enum class Method { Direct, Nhm, Camelion };

std::string to_string(Method m);
/// ArgumentError for anything but "direct", "nhm" or "camelion".
Method method_from_string(const std::string& s);

/// 2|A n B| / (|A| + |B|) for label k; 1 when both sets are empty.
double dice(const LabelVolume& a, const LabelVolume& b, int k);

/// Per-class volume in mm^3 for classes 1..K (index 0 = class 1).
std::vector<double> volumes(const LabelVolume& labels);

/// Sample Pearson correlation. ArgumentError for unequal or short (< 3)
/// inputs, CorrelationError when either sample has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Fraction of all grid voxels (background included) whose label differs.
double label_change_fraction(const LabelVolume& prev, const LabelVolume& next);

/// Evaluation of one loop run.
struct EvalReport {
  std::vector<double> dice;                     // per class vs truth (index 0 = class 1)
  std::vector<double> volume_mm3;               // per class
  std::vector<double> label_change_fraction;    // one entry per completed iteration
  std::vector<std::vector<double>> dice_trajectory;  // per labels snapshot L0..Ln, per class
  int iterations_run = 0;
};

/// One (subject, method) row group of the Dice/volume report.
struct MethodReport {
  std::string subject_id;
  Method method = Method::Direct;
  std::vector<double> dice;               // per class vs truth
  std::vector<double> volume_mm3;         // per class
  std::vector<double> reference_volume_mm3;  // per class, protocol-A direct segmentation
};

/// Classes included in reports: ventricle, GM, WM, brainstem, plus CSF when asked.
std::vector<int> reported_classes(bool include_csf);

/// CSV: subject_id,method,class_name,dice,volume_mm3,reference_volume_mm3.
/// Rows sorted by subject, then method (direct, nhm, camelion), then class.
void write_report(std::vector<MethodReport> reports, const std::vector<int>& classes,
                  const std::filesystem::path& path);

/// CSV: iteration,label_change_fraction,dice_<class>... Row t describes L(t);
/// its change fraction is relative to L(t-1) and is empty for t = 0. Dice
/// columns are empty when no truth was available.
void write_trajectory(const EvalReport& report, const std::vector<int>& classes, const std::filesystem::path& path);

struct CorrelationRow {
  int label = 0;
  Method method = Method::Direct;
  double r = 0.0;
  std::size_t n = 0;
};

/// CSV: class_name,method,pearson_r,n_subjects; rows sorted by class then method.
void write_correlations(std::vector<CorrelationRow> rows, const std::filesystem::path& path);

/// Fixed-precision formatting used by every CSV writer.
std::string format_number(double v, int decimals = 6);

}  // namespace camelion
