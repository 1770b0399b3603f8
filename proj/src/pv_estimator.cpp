#include "camelion/pv_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "camelion/error.hpp"
#include "camelion/parallel.hpp"

namespace camelion {

void PvConfig::validate() const {
  if (!std::isfinite(beta)) throw ArgumentError("pv beta must be finite");
  if (!(grid_oracle_step > 0.0 && grid_oracle_step <= 0.01))
    throw ArgumentError("pv grid_oracle_step must lie in (0, 0.01]");
}

std::vector<double> class_means(const ScalarVolume& image, const LabelVolume& labels) {
  require_same_header(image.header, labels.header, "class_means");
  const int k = labels.num_classes;
  std::vector<double> sum(k, 0.0);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t j = 0; j < image.size(); ++j) {
    const auto l = labels.data[j];
    if (l == 0) continue;
    sum[l - 1u] += image.data[j];
    ++count[l - 1u];
  }
  std::vector<double> means(k);
  for (int c = 0; c < k; ++c) {
    if (count[c] == 0) throw EstimationError("class '" + class_name(c + 1) + "' has no voxels; cannot estimate its mean");
    means[c] = sum[c] / static_cast<double>(count[c]);
  }
  return means;
}

double noise_sigma(const ScalarVolume& image, const LabelVolume& labels, const std::vector<double>& means,
                   SigmaMode mode) {
  require_same_header(image.header, labels.header, "noise_sigma");
  if (means.size() != static_cast<std::size_t>(labels.num_classes))
    throw ArgumentError("noise_sigma: one mean per class required");
  const VolumeHeader& h = image.header;
  const std::size_t nx = h.dims[0], ny = h.dims[1], nz = h.dims[2];

  auto interior = [&](std::size_t x, std::size_t y, std::size_t z, std::uint8_t l) {
    const std::size_t j = h.index(x, y, z);
    if (x > 0 && labels.data[j - 1] != l) return false;
    if (x + 1 < nx && labels.data[j + 1] != l) return false;
    if (y > 0 && labels.data[j - nx] != l) return false;
    if (y + 1 < ny && labels.data[j + nx] != l) return false;
    if (z > 0 && labels.data[j - nx * ny] != l) return false;
    if (z + 1 < nz && labels.data[j + nx * ny] != l) return false;
    return true;
  };

  const int k = labels.num_classes;
  auto accumulate = [&](bool interior_only, std::vector<double>& ss, std::vector<std::size_t>& count) {
    ss.assign(k, 0.0);
    count.assign(k, 0);
    for (std::size_t z = 0; z < nz; ++z)
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t x = 0; x < nx; ++x) {
          const std::size_t j = h.index(x, y, z);
          const auto l = labels.data[j];
          if (l == 0) continue;
          if (interior_only && !interior(x, y, z, l)) continue;
          const double r = image.data[j] - means[l - 1u];
          ss[l - 1u] += r * r;
          ++count[l - 1u];
        }
  };
  std::vector<double> ss;
  std::vector<std::size_t> count;
  accumulate(true, ss, count);
  std::size_t total = 0;
  for (auto c : count) total += c;
  if (total == 0) {
    accumulate(false, ss, count);
    total = 0;
    for (auto c : count) total += c;
  }

  const auto [lo, hi] = std::minmax_element(image.data.begin(), image.data.end());
  const double range = image.data.empty() ? 0.0 : static_cast<double>(*hi) - static_cast<double>(*lo);
  const double floor = range > 0.0 ? 1e-3 * range : 1e-3;
  if (total == 0) return floor;

  double sigma = 0.0;
  if (mode == SigmaMode::Pooled) {
    double s = 0.0;
    for (double v : ss) s += v;
    sigma = std::sqrt(s / static_cast<double>(total));
  } else {
    sigma = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (count[c] > 1) sigma = std::min(sigma, std::sqrt(ss[c] / static_cast<double>(count[c])));
    if (!std::isfinite(sigma)) sigma = 0.0;
  }
  return std::max(sigma, floor);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas: out[q] = min_i f[i] + (spacing (q - i))^2.
void distance_1d(const double* f, double* out, std::size_t n, double spacing, std::vector<std::size_t>& v,
                 std::vector<double>& z) {
  const double s2 = spacing * spacing;
  long k = -1;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    double s = 0.0;
    while (k >= 0) {
      const auto p = v[k];
      const double dq = static_cast<double>(q), dp = static_cast<double>(p);
      s = ((f[q] + s2 * dq * dq) - (f[p] + s2 * dp * dp)) / (2.0 * s2 * (dq - dp));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
    } else {
      ++k;
      v[k] = q;
      z[k] = s;
    }
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(out, out + n, kInf);
    return;
  }
  long j = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[j + 1] < static_cast<double>(q)) ++j;
    const double d = (static_cast<double>(q) - static_cast<double>(v[j])) * spacing;
    out[q] = f[v[j]] + d * d;
  }
}

// Squared anisotropic distance from every voxel to the nearest voxel of `label`.
std::vector<double> squared_distance_to(const LabelVolume& labels, std::uint8_t label) {
  const VolumeHeader& h = labels.header;
  const std::size_t n = h.num_voxels();
  std::vector<double> d(n);
  for (std::size_t j = 0; j < n; ++j) d[j] = labels.data[j] == label ? 0.0 : kInf;

  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t len = h.dims[axis];
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? h.dims[0] : std::size_t{h.dims[0]} * h.dims[1];
    const std::size_t lines = n / len;
    const double spacing = h.voxel_size[axis];
    parallel_for(lines, [&](std::size_t l0, std::size_t l1) {
      std::vector<double> in(len), out(len), z(len + 1);
      std::vector<std::size_t> v(len);
      for (std::size_t l = l0; l < l1; ++l) {
        std::size_t base;
        if (axis == 0) {
          base = l * len;
        } else if (axis == 1) {
          base = (l % h.dims[0]) + (l / h.dims[0]) * h.dims[0] * h.dims[1];
        } else {
          base = l;
        }
        for (std::size_t i = 0; i < len; ++i) in[i] = d[base + i * stride];
        distance_1d(in.data(), out.data(), len, spacing, v, z);
        for (std::size_t i = 0; i < len; ++i) d[base + i * stride] = out[i];
      }
    });
  }
  return d;
}

}  // namespace

LabelVolume second_class_map(const LabelVolume& labels) {
  labels.validate();
  const auto counts = labels.counts();
  std::vector<std::uint8_t> present;
  for (std::size_t c = 1; c < counts.size(); ++c)
    if (counts[c] > 0) present.push_back(static_cast<std::uint8_t>(c));
  if (present.size() < 2) throw GeometryError("second_class_map needs at least two tissue classes");

  const std::size_t n = labels.size();
  std::vector<std::vector<double>> dist;
  dist.reserve(present.size());
  for (auto c : present) dist.push_back(squared_distance_to(labels, c));

  LabelVolume out(labels.header, labels.num_classes);
  for (std::size_t j = 0; j < n; ++j) {
    const auto own = labels.data[j];
    if (own == 0) continue;
    double best = kInf;
    std::uint8_t best_label = 0;
    for (std::size_t i = 0; i < present.size(); ++i) {
      if (present[i] == own) continue;
      if (dist[i][j] < best) {
        best = dist[i][j];
        best_label = present[i];
      }
    }
    out.data[j] = best_label;
  }
  return out;
}

double map_objective(double alpha, double f, double c_a, double c_b, double sigma, double beta) {
  const double r = f - alpha * c_a - (1.0 - alpha) * c_b;
  const double dev = alpha - 0.5;
  return r * r / (2.0 * sigma * sigma) - 2.0 * beta * dev * dev;
}

double map_alpha(double f, double c_a, double c_b, double sigma, double beta) {
  if (c_a == c_b) throw DegeneratePairError("map_alpha: the two class intensities are identical");
  if (!(sigma > 0.0)) throw ArgumentError("map_alpha: sigma must be positive");
  const double d = c_a - c_b;
  const double s2 = sigma * sigma;

  double best_alpha = 1.0;
  double best_j = map_objective(1.0, f, c_a, c_b, sigma, beta);
  auto consider = [&](double alpha) {
    const double j = map_objective(alpha, f, c_a, c_b, sigma, beta);
    if (j < best_j || (j == best_j && alpha > best_alpha)) {
      best_j = j;
      best_alpha = alpha;
    }
  };
  consider(0.0);
  if (d * d / (2.0 * s2) - 2.0 * beta > 0.0) {
    const double stationary = (d * (f - c_b) / s2 - 2.0 * beta) / (d * d / s2 - 4.0 * beta);
    consider(std::clamp(stationary, 0.0, 1.0));
  }
  return best_alpha;
}

PartialVolumeSet estimate_pv(const ScalarVolume& image, const LabelVolume& labels, const PvConfig& cfg,
                             PvModel& model) {
  cfg.validate();
  require_same_header(image.header, labels.header, "estimate_pv");
  model.second_class = second_class_map(labels);
  model.class_means = class_means(image, labels);
  model.noise_sigma = noise_sigma(image, labels, model.class_means, cfg.sigma_mode);
  const double sigma = model.noise_sigma;
  const double beta = cfg.beta / (2.0 * sigma * sigma);

  PartialVolumeSet pv(image.header, labels.num_classes);
  const std::size_t n = image.size();
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t j = b; j < e; ++j) {
      const auto a = labels.data[j];
      if (a == 0) continue;
      const auto s = model.second_class.data[j];
      const double alpha =
          map_alpha(image.data[j], model.class_means[a - 1u], model.class_means[s - 1u], sigma, beta);
      const auto pa = static_cast<float>(alpha);
      pv.at(a - 1, j) = pa;
      pv.at(s - 1, j) = 1.0f - pa;
    }
  });
  return pv;
}

PartialVolumeSet estimate_pv(const ScalarVolume& image, const LabelVolume& labels, const PvConfig& cfg) {
  PvModel model;
  return estimate_pv(image, labels, cfg, model);
}

}  // namespace camelion
