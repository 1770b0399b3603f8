#include "camelion/segmenter.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <tuple>

#include "camelion/error.hpp"
#include "camelion/mvf.hpp"
#include "camelion/parallel.hpp"

namespace camelion {
namespace {

void check_atlases(std::span<const AtlasPair> atlases) {
  if (atlases.empty()) throw ArgumentError("segmenter training needs at least one atlas");
  for (const auto& a : atlases) {
    a.validate();
    require_same_header(atlases.front().image.header, a.image.header, "segmenter training atlases");
    if (a.labels.num_classes != atlases.front().labels.num_classes)
      throw ArgumentError("segmenter training atlases disagree on the class count");
  }
}

// Mean filter of half-width r along one axis; windows are truncated at the
// grid boundary and normalized by the in-bounds count.
void box_pass(std::vector<double>& v, const VolumeHeader& h, int axis, int r) {
  const std::size_t n_axis = h.dims[axis];
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? h.dims[0] : std::size_t{h.dims[0]} * h.dims[1];
  const std::size_t lines = h.num_voxels() / n_axis;
  std::vector<double> line(n_axis), prefix(n_axis + 1);
  for (std::size_t l = 0; l < lines; ++l) {
    // Start of the l-th line along `axis`.
    std::size_t base;
    if (axis == 0) {
      base = l * n_axis;
    } else if (axis == 1) {
      base = (l % h.dims[0]) + (l / h.dims[0]) * h.dims[0] * h.dims[1];
    } else {
      base = l;
    }
    for (std::size_t i = 0; i < n_axis; ++i) line[i] = v[base + i * stride];
    prefix[0] = 0.0;
    for (std::size_t i = 0; i < n_axis; ++i) prefix[i + 1] = prefix[i] + line[i];
    for (std::size_t i = 0; i < n_axis; ++i) {
      const std::size_t lo = i >= static_cast<std::size_t>(r) ? i - r : 0;
      const std::size_t hi = std::min(n_axis, i + r + 1);
      v[base + i * stride] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    }
  }
}

struct ClassAccumulator {
  double sum = 0.0;
  std::size_t count = 0;
};

}  // namespace

PartialVolumeSet label_frequency(std::span<const AtlasPair> atlases) {
  check_atlases(atlases);
  const VolumeHeader& h = atlases.front().image.header;
  const int k = atlases.front().labels.num_classes;
  const std::size_t n = h.num_voxels();
  std::vector<std::uint32_t> counts(n * static_cast<std::size_t>(k), 0);
  for (const auto& a : atlases)
    for (std::size_t j = 0; j < n; ++j)
      if (const auto l = a.labels.data[j]; l > 0) ++counts[(l - 1u) * n + j];
  PartialVolumeSet freq(h, k);
  const auto m = static_cast<double>(atlases.size());
  for (std::size_t i = 0; i < counts.size(); ++i) freq.data[i] = static_cast<float>(counts[i] / m);
  return freq;
}

SegmenterModel train(std::span<const AtlasPair> atlases, const SegmenterConfig& cfg) {
  check_atlases(atlases);
  if (cfg.backend != SegBackend::Gaussian) throw ArgumentError("unknown segmenter backend");
  if (!(cfg.prior_epsilon >= 0.0 && cfg.prior_epsilon < 1.0)) throw ArgumentError("prior_epsilon must lie in [0, 1)");
  if (!(cfg.smoothing_weight >= 0.0)) throw ArgumentError("smoothing_weight must be >= 0");
  if (cfg.prior_radius < 0) throw ArgumentError("prior_radius must be >= 0");

  const VolumeHeader& h = atlases.front().image.header;
  const int k = atlases.front().labels.num_classes;
  const std::size_t n = h.num_voxels();

  // Per-atlas partial sums are combined after sorting, so the result does
  // not depend on the order atlases are supplied in.
  std::vector<std::vector<ClassAccumulator>> per_atlas(atlases.size(), std::vector<ClassAccumulator>(k));
  float lo = std::numeric_limits<float>::max();
  float hi = std::numeric_limits<float>::lowest();
  for (std::size_t a = 0; a < atlases.size(); ++a) {
    const auto& img = atlases[a].image.data;
    const auto& lab = atlases[a].labels.data;
    for (std::size_t j = 0; j < n; ++j) {
      lo = std::min(lo, img[j]);
      hi = std::max(hi, img[j]);
      if (lab[j] == 0) continue;
      auto& acc = per_atlas[a][lab[j] - 1u];
      acc.sum += img[j];
      ++acc.count;
    }
  }
  SegmenterModel model;
  model.backend = cfg.backend;
  model.prior_epsilon = cfg.prior_epsilon;
  model.smoothing_weight = cfg.smoothing_weight;
  model.means.assign(k, 0.0);
  model.variances.assign(k, 0.0);

  auto sorted_total = [](std::vector<std::pair<double, std::size_t>> parts) {
    std::sort(parts.begin(), parts.end());
    double s = 0.0;
    std::size_t c = 0;
    for (const auto& [ps, pc] : parts) {
      s += ps;
      c += pc;
    }
    return std::pair{s, c};
  };

  for (int c = 0; c < k; ++c) {
    std::vector<std::pair<double, std::size_t>> parts;
    for (const auto& acc : per_atlas) parts.emplace_back(acc[c].sum, acc[c].count);
    const auto [sum, count] = sorted_total(parts);
    if (count == 0) throw TrainingError("class '" + class_name(c + 1) + "' is absent from all atlases");
    model.means[c] = sum / static_cast<double>(count);
  }
  std::vector<std::vector<double>> sq(atlases.size(), std::vector<double>(k, 0.0));
  for (std::size_t a = 0; a < atlases.size(); ++a) {
    const auto& img = atlases[a].image.data;
    const auto& lab = atlases[a].labels.data;
    for (std::size_t j = 0; j < n; ++j) {
      if (lab[j] == 0) continue;
      const double d = img[j] - model.means[lab[j] - 1u];
      sq[a][lab[j] - 1u] += d * d;
    }
  }
  const double range = static_cast<double>(hi) - static_cast<double>(lo);
  const double floor = std::max(1e-4 * range * range, std::numeric_limits<double>::min());
  for (int c = 0; c < k; ++c) {
    std::vector<std::pair<double, std::size_t>> parts;
    for (std::size_t a = 0; a < atlases.size(); ++a) parts.emplace_back(sq[a][c], per_atlas[a][c].count);
    const auto [ss, count] = sorted_total(parts);
    model.variances[c] = std::max(ss / static_cast<double>(count), floor);
  }

  // Spatial prior.
  PartialVolumeSet freq = label_frequency(atlases);
  std::vector<char> mask(n, 0);
  for (const auto& a : atlases)
    for (std::size_t j = 0; j < n; ++j)
      if (a.labels.data[j] != 0) mask[j] = 1;
  std::vector<std::vector<double>> smooth(k, std::vector<double>(n));
  for (int c = 0; c < k; ++c) {
    auto ch = freq.channel(c);
    std::copy(ch.begin(), ch.end(), smooth[c].begin());
    if (cfg.prior_radius > 0)
      for (int axis = 0; axis < 3; ++axis) box_pass(smooth[c], h, axis, cfg.prior_radius);
  }
  model.prior = PartialVolumeSet(h, k);
  for (std::size_t j = 0; j < n; ++j) {
    if (!mask[j]) continue;
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
      smooth[c][j] = std::max(smooth[c][j], cfg.prior_epsilon);
      total += smooth[c][j];
    }
    const double scale = total > 1.0 ? 1.0 / total : 1.0;
    for (int c = 0; c < k; ++c) model.prior.at(c, j) = static_cast<float>(std::min(1.0, smooth[c][j] * scale));
  }
  return model;
}

SegOutput predict(const SegmenterModel& model, const ScalarVolume& image, const std::vector<char>* foreground) {
  require_same_header(model.prior.header, image.header, "segmenter predict");
  if (foreground != nullptr && foreground->size() != image.size())
    throw ArgumentError("segmenter predict: foreground mask size does not match the image");
  auto is_foreground = [&](std::size_t j) {
    return foreground != nullptr ? (*foreground)[j] != 0 : image.data[j] > 0.0f;
  };
  const int k = model.num_classes();
  if (k != model.prior.num_classes) throw ArgumentError("segmenter model prior has the wrong class count");
  const VolumeHeader& h = image.header;
  const std::size_t n = h.num_voxels();

  std::vector<double> log_norm(k);
  for (int c = 0; c < k; ++c) log_norm[c] = -0.5 * std::log(2.0 * std::numbers::pi * model.variances[c]);

  SegOutput out;
  out.labels = LabelVolume(h, k);
  out.posteriors = PartialVolumeSet(h, k);
  std::vector<double> log_post(n * static_cast<std::size_t>(k), -std::numeric_limits<double>::infinity());
  std::vector<char> active(n, 0);

  parallel_for(n, [&](std::size_t b, std::size_t e) {
    std::vector<double> lp(k);
    for (std::size_t j = b; j < e; ++j) {
      const double f = image.data[j];
      if (!is_foreground(j) || model.prior.is_background(j)) continue;
      double best = -std::numeric_limits<double>::infinity();
      int best_c = -1;
      for (int c = 0; c < k; ++c) {
        const double pi = model.prior.at(c, j);
        if (pi <= 0.0) {
          lp[c] = -std::numeric_limits<double>::infinity();
          continue;
        }
        const double d = f - model.means[c];
        lp[c] = log_norm[c] - d * d / (2.0 * model.variances[c]) + std::log(pi);
        if (lp[c] > best) {
          best = lp[c];
          best_c = c;
        }
      }
      double z = 0.0;
      for (int c = 0; c < k; ++c) z += std::exp(lp[c] - best);
      const double log_z = best + std::log(z);
      for (int c = 0; c < k; ++c) {
        const double l = lp[c] - log_z;
        log_post[static_cast<std::size_t>(c) * n + j] = l;
        out.posteriors.at(c, j) = static_cast<float>(std::exp(l));
      }
      out.labels.data[j] = static_cast<std::uint8_t>(best_c + 1);
      active[j] = 1;
    }
  });
  for (std::size_t j = 0; j < n; ++j)
    if (is_foreground(j) && model.prior.is_background(j)) ++out.outside_prior;

  if (model.smoothing_weight > 0.0) {
    const LabelVolume before = out.labels;
    const std::size_t nx = h.dims[0], ny = h.dims[1], nz = h.dims[2];
    parallel_for(nz, [&](std::size_t z0, std::size_t z1) {
      std::vector<int> votes(static_cast<std::size_t>(k) + 1);
      for (std::size_t z = z0; z < z1; ++z)
        for (std::size_t y = 0; y < ny; ++y)
          for (std::size_t x = 0; x < nx; ++x) {
            const std::size_t j = h.index(x, y, z);
            if (!active[j]) continue;
            std::fill(votes.begin(), votes.end(), 0);
            if (x > 0) ++votes[before.data[j - 1]];
            if (x + 1 < nx) ++votes[before.data[j + 1]];
            if (y > 0) ++votes[before.data[j - nx]];
            if (y + 1 < ny) ++votes[before.data[j + nx]];
            if (z > 0) ++votes[before.data[j - nx * ny]];
            if (z + 1 < nz) ++votes[before.data[j + nx * ny]];
            double best = -std::numeric_limits<double>::infinity();
            int best_c = -1;
            for (int c = 0; c < k; ++c) {
              const double s = log_post[static_cast<std::size_t>(c) * n + j] + model.smoothing_weight * votes[c + 1];
              if (s > best) {
                best = s;
                best_c = c;
              }
            }
            out.labels.data[j] = static_cast<std::uint8_t>(best_c + 1);
          }
    });
  }
  return out;
}

SegmenterModel warm_start(const SegmenterModel& model, const SegmenterModel& previous) {
  if (model.backend != previous.backend) throw ArgumentError("warm_start: backend mismatch");
  if (model.num_classes() != previous.num_classes()) throw ArgumentError("warm_start: class count mismatch");
  return model;
}

namespace {

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(bits >> (8 * i));
  out.write(b, 8);
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) throw FormatError("segmenter model truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t{b[i]} << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

// Layout: "SEGM" | backend u8 | K u8 | prior_epsilon f64 | smoothing_weight f64 |
// means K x f64 | variances K x f64 | prior as an embedded pv-kind MVF block.
void write_segmenter(std::ostream& out, const SegmenterModel& m) {
  out.write("SEGM", 4);
  out.put(static_cast<char>(m.backend));
  out.put(static_cast<char>(m.num_classes()));
  put_f64(out, m.prior_epsilon);
  put_f64(out, m.smoothing_weight);
  for (double v : m.means) put_f64(out, v);
  for (double v : m.variances) put_f64(out, v);
  write_mvf(out, m.prior);
  if (!out) throw IoError("failed writing segmenter model");
}

SegmenterModel read_segmenter(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "SEGM", 4) != 0) throw FormatError("not a segmenter model (bad magic)");
  const int backend = in.get();
  const int k = in.get();
  if (!in) throw FormatError("segmenter model truncated");
  if (backend != static_cast<int>(SegBackend::Gaussian)) throw FormatError("unknown segmenter backend tag");
  SegmenterModel m;
  m.backend = SegBackend::Gaussian;
  m.prior_epsilon = get_f64(in);
  m.smoothing_weight = get_f64(in);
  m.means.resize(k);
  m.variances.resize(k);
  for (auto& v : m.means) v = get_f64(in);
  for (auto& v : m.variances) v = get_f64(in);
  auto prior = read_mvf(in);
  auto* pv = std::get_if<PartialVolumeSet>(&prior);
  if (pv == nullptr || pv->num_classes != k) throw FormatError("segmenter model prior block is malformed");
  m.prior = std::move(*pv);
  return m;
}

void write_segmenter(const SegmenterModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_segmenter(out, m);
}

SegmenterModel read_segmenter(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_segmenter(in);
}

}  // namespace camelion
