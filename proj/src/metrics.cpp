#include "camelion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "camelion/error.hpp"

namespace camelion {

std::string to_string(Method m) {
  switch (m) {
    case Method::Direct: return "direct";
    case Method::Nhm: return "nhm";
    case Method::Camelion: return "camelion";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "direct") return Method::Direct;
  if (s == "nhm") return Method::Nhm;
  if (s == "camelion") return Method::Camelion;
  throw ArgumentError("unknown method '" + s + "' (expected direct, nhm or camelion)");
}

double dice(const LabelVolume& a, const LabelVolume& b, int k) {
  require_same_header(a.header, b.header, "dice");
  if (a.size() != b.size()) throw ArgumentError("dice: payload sizes differ");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const bool in_a = a.data[j] == k;
    const bool in_b = b.data[j] == k;
    na += in_a;
    nb += in_b;
    both += in_a && in_b;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<double> volumes(const LabelVolume& labels) {
  const auto counts = labels.counts();
  const double vv = labels.header.voxel_volume();
  std::vector<double> out;
  for (std::size_t c = 1; c < counts.size(); ++c) out.push_back(static_cast<double>(counts[c]) * vv);
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("pearson: samples differ in length");
  if (x.size() < 3) throw ArgumentError("pearson: need at least three pairs");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw CorrelationError("pearson: a sample has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double label_change_fraction(const LabelVolume& prev, const LabelVolume& next) {
  require_same_header(prev.header, next.header, "label_change_fraction");
  std::size_t changed = 0;
  for (std::size_t j = 0; j < prev.size(); ++j) changed += prev.data[j] != next.data[j];
  return prev.size() == 0 ? 0.0 : static_cast<double>(changed) / static_cast<double>(prev.size());
}

std::vector<int> reported_classes(bool include_csf) {
  std::vector<int> out;
  if (include_csf) out.push_back(static_cast<int>(Tissue::Csf));
  for (auto t : {Tissue::Ventricle, Tissue::GrayMatter, Tissue::WhiteMatter, Tissue::Brainstem})
    out.push_back(static_cast<int>(t));
  return out;
}

std::string format_number(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  // "-0.000000" -> "0.000000"
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

double value_or_nan(const std::vector<double>& v, int label) {
  const auto i = static_cast<std::size_t>(label - 1);
  return i < v.size() ? v[i] : std::nan("");
}

std::string cell(double v, int decimals) { return std::isnan(v) ? std::string{} : format_number(v, decimals); }

}  // namespace

void write_report(std::vector<MethodReport> reports, const std::vector<int>& classes,
                  const std::filesystem::path& path) {
  std::stable_sort(reports.begin(), reports.end(), [](const MethodReport& a, const MethodReport& b) {
    if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
    return static_cast<int>(a.method) < static_cast<int>(b.method);
  });
  auto out = open_csv(path);
  out << "subject_id,method,class_name,dice,volume_mm3,reference_volume_mm3\n";
  for (const auto& r : reports)
    for (int c : classes)
      out << r.subject_id << ',' << to_string(r.method) << ',' << class_name(c) << ',' << cell(value_or_nan(r.dice, c), 6)
          << ',' << cell(value_or_nan(r.volume_mm3, c), 3) << ',' << cell(value_or_nan(r.reference_volume_mm3, c), 3)
          << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void write_trajectory(const EvalReport& report, const std::vector<int>& classes, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "iteration,label_change_fraction";
  for (int c : classes) out << ",dice_" << class_name(c);
  out << '\n';
  const std::size_t rows = static_cast<std::size_t>(report.iterations_run) + 1;
  for (std::size_t t = 0; t < rows; ++t) {
    out << t << ',';
    if (t > 0 && t - 1 < report.label_change_fraction.size()) out << format_number(report.label_change_fraction[t - 1]);
    for (int c : classes) {
      out << ',';
      if (t < report.dice_trajectory.size()) out << cell(value_or_nan(report.dice_trajectory[t], c), 6);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_correlations(std::vector<CorrelationRow> rows, const std::filesystem::path& path) {
  std::stable_sort(rows.begin(), rows.end(), [](const CorrelationRow& a, const CorrelationRow& b) {
    if (a.label != b.label) return a.label < b.label;
    return static_cast<int>(a.method) < static_cast<int>(b.method);
  });
  auto out = open_csv(path);
  out << "class_name,method,pearson_r,n_subjects\n";
  for (const auto& r : rows)
    out << class_name(r.label) << ',' << to_string(r.method) << ',' << format_number(r.r) << ',' << r.n << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace camelion
