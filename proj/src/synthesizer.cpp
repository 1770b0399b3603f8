#include "camelion/synthesizer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

#include "camelion/error.hpp"
#include "camelion/parallel.hpp"
#include "camelion/random.hpp"

namespace camelion {

void SynthConfig::validate() const {
  if (backend != SynthBackend::Linear && backend != SynthBackend::Regressor)
    throw ArgumentError("unknown synthesis backend");
  if (patch_radius < 0 || patch_radius > 3) throw ArgumentError("synth patch_radius must lie in [0, 3]");
  if (hidden_units < 1) throw ArgumentError("synth hidden_units must be positive");
  if (epochs < 0) throw ArgumentError("synth epochs must be >= 0");
  if (batch_size < 1) throw ArgumentError("synth batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ArgumentError("synth learning_rate must be positive");
}

namespace {

std::vector<std::size_t> tissue_voxels(const PartialVolumeSet& pv) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < pv.header.num_voxels(); ++j)
    if (!pv.is_background(j)) out.push_back(j);
  return out;
}

void check_pair(const PartialVolumeSet& pv, const ScalarVolume& image) {
  require_same_header(pv.header, image.header, "synthesis fit");
  if (pv.num_classes < 1) throw ArgumentError("synthesis fit: no partial volume channels");
}

[[noreturn]] void throw_rank(const PartialVolumeSet& pv, const std::vector<std::size_t>& voxels) {
  std::ostringstream msg;
  msg << "normal equations are singular; per-class support:";
  for (int c = 0; c < pv.num_classes; ++c) {
    std::size_t support = 0;
    for (auto j : voxels) support += pv.at(c, j) > 0.0f;
    msg << ' ' << class_name(c + 1) << '=' << support;
  }
  throw RankError(msg.str());
}

// Zero-padded patch features of voxel (x, y, z), channel-major.
void patch_features(const PartialVolumeSet& pv, int radius, std::size_t x, std::size_t y, std::size_t z,
                    double* out) {
  const VolumeHeader& h = pv.header;
  const long r = radius;
  const long side = 2 * r + 1;
  const long per_channel = side * side * side;
  for (int c = 0; c < pv.num_classes; ++c) {
    long i = 0;
    for (long dz = -r; dz <= r; ++dz)
      for (long dy = -r; dy <= r; ++dy)
        for (long dx = -r; dx <= r; ++dx, ++i) {
          const long px = static_cast<long>(x) + dx, py = static_cast<long>(y) + dy, pz = static_cast<long>(z) + dz;
          double v = 0.0;
          if (px >= 0 && py >= 0 && pz >= 0 && px < static_cast<long>(h.dims[0]) && py < static_cast<long>(h.dims[1]) &&
              pz < static_cast<long>(h.dims[2]))
            v = pv.at(c, h.index(static_cast<std::size_t>(px), static_cast<std::size_t>(py), static_cast<std::size_t>(pz)));
          out[c * per_channel + i] = v;
        }
  }
}

int feature_count(int k, int radius) {
  const int side = 2 * radius + 1;
  return k * side * side * side;
}

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Standardized feature matrix (inputs x voxels).
Mat standardized_features(const PartialVolumeSet& pv, const PatchRegressor& reg, const std::vector<std::size_t>& voxels) {
  const VolumeHeader& h = pv.header;
  const int in = reg.inputs();
  Mat x(in, static_cast<Eigen::Index>(voxels.size()));
  std::vector<double> buf(in);
  for (std::size_t s = 0; s < voxels.size(); ++s) {
    const std::size_t j = voxels[s];
    const std::size_t vx = j % h.dims[0];
    const std::size_t vy = (j / h.dims[0]) % h.dims[1];
    const std::size_t vz = j / (std::size_t{h.dims[0]} * h.dims[1]);
    patch_features(pv, reg.patch_radius, vx, vy, vz, buf.data());
    for (int i = 0; i < in; ++i) x(i, static_cast<Eigen::Index>(s)) = (buf[i] - reg.input_mean[i]) / reg.input_scale[i];
  }
  return x;
}

struct Params {
  Mat w1;  // hidden x in
  Vec b1;
  Vec w2;  // hidden
  Vec skip;
  double b2 = 0.0;
};

Vec forward(const Params& p, const Mat& x) {
  Mat hidden = (p.w1 * x).colwise() + p.b1;
  hidden = hidden.array().tanh().matrix();
  Vec y = hidden.transpose() * p.w2 + x.transpose() * p.skip;
  y.array() += p.b2;
  return y;
}

}  // namespace

SynthModel fit_linear(const PartialVolumeSet& pv, const ScalarVolume& image) {
  check_pair(pv, image);
  const int k = pv.num_classes;
  const auto voxels = tissue_voxels(pv);
  Mat normal = Mat::Zero(k, k);
  Vec rhs = Vec::Zero(k);
  std::vector<double> p(k);
  for (auto j : voxels) {
    for (int c = 0; c < k; ++c) p[c] = pv.at(c, j);
    const double f = image.data[j];
    for (int a = 0; a < k; ++a) {
      if (p[a] == 0.0) continue;
      rhs(a) += p[a] * f;
      for (int b = 0; b < k; ++b) normal(a, b) += p[a] * p[b];
    }
  }
  if (voxels.size() < static_cast<std::size_t>(k)) throw_rank(pv, voxels);
  Eigen::SelfAdjointEigenSolver<Mat> eig(normal, Eigen::EigenvaluesOnly);
  const double max_ev = eig.eigenvalues().maxCoeff();
  const double min_ev = eig.eigenvalues().minCoeff();
  if (!(max_ev > 0.0) || min_ev <= 1e-12 * max_ev) throw_rank(pv, voxels);
  const Vec c = normal.ldlt().solve(rhs);

  SynthModel m;
  m.backend = SynthBackend::Linear;
  m.num_classes = k;
  m.intensities.assign(c.data(), c.data() + k);
  m.train_mse = tissue_mse(synthesize(m, pv), image, pv);
  return m;
}

SynthModel fit_regressor(const PartialVolumeSet& pv, const ScalarVolume& image, const SynthConfig& cfg) {
  cfg.validate();
  check_pair(pv, image);
  const auto voxels = tissue_voxels(pv);
  const int in = feature_count(pv.num_classes, cfg.patch_radius);
  if (voxels.size() < static_cast<std::size_t>(pv.num_classes)) throw_rank(pv, voxels);
  // Same identifiability requirement as the linear fit.
  fit_linear(pv, image);

  SynthModel m;
  m.backend = SynthBackend::Regressor;
  m.num_classes = pv.num_classes;
  PatchRegressor& reg = m.regressor;
  reg.patch_radius = cfg.patch_radius;
  reg.hidden_units = cfg.hidden_units;
  reg.input_mean.assign(in, 0.0);
  reg.input_scale.assign(in, 1.0);

  const auto n = static_cast<Eigen::Index>(voxels.size());
  Mat raw(in, n);
  {
    PatchRegressor identity = reg;
    raw = standardized_features(pv, identity, voxels);
  }
  for (int i = 0; i < in; ++i) {
    const double mean = raw.row(i).mean();
    const double var = (raw.row(i).array() - mean).square().mean();
    reg.input_mean[i] = mean;
    reg.input_scale[i] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  Mat x(in, n);
  for (int i = 0; i < in; ++i) x.row(i) = (raw.row(i).array() - reg.input_mean[i]) / reg.input_scale[i];
  raw.resize(0, 0);

  Vec target(n);
  for (Eigen::Index s = 0; s < n; ++s) target(s) = image.data[voxels[static_cast<std::size_t>(s)]];
  reg.target_mean = target.mean();
  const double tvar = (target.array() - reg.target_mean).square().mean();
  reg.target_scale = tvar > 1e-12 ? std::sqrt(tvar) : 1.0;
  const Vec y = (target.array() - reg.target_mean) / reg.target_scale;

  const int hidden = cfg.hidden_units;
  Params p;
  SplitMix rng(hash_counter(cfg.seed, 0x5A17ull));
  const double bound = std::sqrt(6.0 / (in + hidden));
  p.w1.resize(hidden, in);
  for (Eigen::Index r = 0; r < hidden; ++r)
    for (Eigen::Index c = 0; c < in; ++c) p.w1(r, c) = rng.uniform(-bound, bound);
  p.b1 = Vec::Zero(hidden);
  p.w2 = Vec::Zero(hidden);
  // Direct path starts at the minimum-norm least-squares solution (features are
  // centred, so the intercept is the target mean, i.e. zero).
  {
    const Mat normal = x * x.transpose();
    const Vec rhs = x * y;
    p.skip = normal.completeOrthogonalDecomposition().solve(rhs);
    p.b2 = 0.0;
  }

  auto full_loss = [&](const Params& q) { return (forward(q, x) - y).squaredNorm() / static_cast<double>(n); };
  Params best = p;
  double best_loss = full_loss(p);

  // Adam state.
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Mat m_w1 = Mat::Zero(hidden, in), v_w1 = Mat::Zero(hidden, in);
  Vec m_b1 = Vec::Zero(hidden), v_b1 = Vec::Zero(hidden);
  Vec m_w2 = Vec::Zero(hidden), v_w2 = Vec::Zero(hidden);
  Vec m_skip = Vec::Zero(in), v_skip = Vec::Zero(in);
  double m_b2 = 0.0, v_b2 = 0.0;
  long step = 0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index s = 0; s < n; ++s) order[static_cast<std::size_t>(s)] = s;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Mat xb(in, bs);
      Vec yb(bs);
      for (Eigen::Index s = 0; s < bs; ++s) {
        const auto src = order[static_cast<std::size_t>(start + s)];
        xb.col(s) = x.col(src);
        yb(s) = y(src);
      }
      const Mat pre = (p.w1 * xb).colwise() + p.b1;
      const Mat act = pre.array().tanh().matrix();
      Vec out = act.transpose() * p.w2 + xb.transpose() * p.skip;
      out.array() += p.b2;
      const Vec g_out = 2.0 * (out - yb) / static_cast<double>(bs);

      const Vec g_w2 = act * g_out;
      const double g_b2 = g_out.sum();
      const Vec g_skip = xb * g_out;
      const Mat g_pre = ((p.w2 * g_out.transpose()).array() * (1.0 - act.array().square())).matrix();
      const Mat g_w1 = g_pre * xb.transpose();
      const Vec g_b1 = g_pre.rowwise().sum();

      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      const double lr = cfg.learning_rate;
      auto adam = [&](auto& param, auto& mom, auto& vel, const auto& grad) {
        mom = beta1 * mom + (1.0 - beta1) * grad;
        vel = beta2 * vel + (1.0 - beta2) * grad.cwiseProduct(grad);
        param.array() -= lr * (mom.array() / c1) / ((vel.array() / c2).sqrt() + eps);
      };
      adam(p.w1, m_w1, v_w1, g_w1);
      adam(p.b1, m_b1, v_b1, g_b1);
      adam(p.w2, m_w2, v_w2, g_w2);
      adam(p.skip, m_skip, v_skip, g_skip);
      m_b2 = beta1 * m_b2 + (1.0 - beta1) * g_b2;
      v_b2 = beta2 * v_b2 + (1.0 - beta2) * g_b2 * g_b2;
      p.b2 -= lr * (m_b2 / c1) / (std::sqrt(v_b2 / c2) + eps);
    }
    const double loss = full_loss(p);
    if (loss < best_loss) {
      best_loss = loss;
      best = p;
    }
  }

  reg.hidden_weights.resize(static_cast<std::size_t>(hidden) * in);
  for (int r = 0; r < hidden; ++r)
    for (int c = 0; c < in; ++c) reg.hidden_weights[static_cast<std::size_t>(r) * in + c] = best.w1(r, c);
  reg.hidden_bias.assign(best.b1.data(), best.b1.data() + hidden);
  reg.output_weights.assign(best.w2.data(), best.w2.data() + hidden);
  reg.skip_weights.assign(best.skip.data(), best.skip.data() + in);
  reg.output_bias = best.b2;
  m.train_mse = tissue_mse(synthesize(m, pv), image, pv);
  return m;
}

SynthModel fit_synth(const PartialVolumeSet& pv, const ScalarVolume& image, const SynthConfig& cfg) {
  cfg.validate();
  return cfg.backend == SynthBackend::Linear ? fit_linear(pv, image) : fit_regressor(pv, image, cfg);
}

ScalarVolume synthesize(const SynthModel& model, const PartialVolumeSet& pv) {
  if (pv.num_classes != model.num_classes) throw ArgumentError("synthesize: class count does not match the model");
  const VolumeHeader& h = pv.header;
  ScalarVolume out(h);
  const std::size_t n = h.num_voxels();
  if (model.backend == SynthBackend::Linear) {
    parallel_for(n, [&](std::size_t b, std::size_t e) {
      for (std::size_t j = b; j < e; ++j) {
        double v = 0.0;
        for (int c = 0; c < pv.num_classes; ++c) v += double{pv.at(c, j)} * model.intensities[c];
        out.data[j] = static_cast<float>(v);
      }
    });
    return out;
  }

  const PatchRegressor& reg = model.regressor;
  const int in = reg.inputs();
  if (in != feature_count(pv.num_classes, reg.patch_radius)) throw ArgumentError("synthesize: regressor input size mismatch");
  const int hidden = reg.hidden_units;
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    std::vector<double> feat(in);
    for (std::size_t j = b; j < e; ++j) {
      if (pv.is_background(j)) continue;
      const std::size_t x = j % h.dims[0];
      const std::size_t y = (j / h.dims[0]) % h.dims[1];
      const std::size_t z = j / (std::size_t{h.dims[0]} * h.dims[1]);
      patch_features(pv, reg.patch_radius, x, y, z, feat.data());
      double acc = reg.output_bias;
      for (int i = 0; i < in; ++i) {
        feat[i] = (feat[i] - reg.input_mean[i]) / reg.input_scale[i];
        acc += reg.skip_weights[i] * feat[i];
      }
      for (int r = 0; r < hidden; ++r) {
        const double* w = reg.hidden_weights.data() + static_cast<std::size_t>(r) * in;
        double a = reg.hidden_bias[r];
        for (int i = 0; i < in; ++i) a += w[i] * feat[i];
        acc += reg.output_weights[r] * std::tanh(a);
      }
      out.data[j] = static_cast<float>(reg.target_mean + reg.target_scale * acc);
    }
  });
  return out;
}

double tissue_mse(const ScalarVolume& a, const ScalarVolume& b, const PartialVolumeSet& pv) {
  require_same_header(a.header, b.header, "tissue_mse");
  require_same_header(a.header, pv.header, "tissue_mse");
  double ss = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (pv.is_background(j)) continue;
    const double d = static_cast<double>(a.data[j]) - static_cast<double>(b.data[j]);
    ss += d * d;
    ++count;
  }
  return count == 0 ? 0.0 : ss / static_cast<double>(count);
}

void add_noise(ScalarVolume& image, const PartialVolumeSet& pv, double sigma, std::uint64_t seed) {
  require_same_header(image.header, pv.header, "add_noise");
  for (std::size_t j = 0; j < image.size(); ++j)
    if (!pv.is_background(j)) image.data[j] = static_cast<float>(image.data[j] + sigma * counter_normal(seed, j));
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(v >> (8 * i));
  out.write(b, 4);
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(bits >> (8 * i));
  out.write(b, 8);
}

void put_array(std::ostream& out, const std::vector<double>& v) {
  put_u32(out, static_cast<std::uint32_t>(v.size()));
  for (double x : v) put_f64(out, x);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw FormatError("synthesis model truncated");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) throw FormatError("synthesis model truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t{b[i]} << (8 * i);
  return std::bit_cast<double>(bits);
}

std::vector<double> get_array(std::istream& in) {
  const auto n = get_u32(in);
  if (n > (1u << 26)) throw FormatError("synthesis model array length is implausible");
  std::vector<double> v(n);
  for (auto& x : v) x = get_f64(in);
  return v;
}

}  // namespace

// Layout: "SYNM" | backend u8 | K u8 | train_mse f64 | backend payload.
// Linear payload: intensities array. Regressor payload: radius u32 |
// hidden u32 | input_mean | input_scale | target_mean f64 | target_scale f64 |
// hidden_weights | hidden_bias | output_weights | skip_weights | output_bias f64.
// Arrays are u32 length followed by f64 values.
void write_synth(std::ostream& out, const SynthModel& m) {
  out.write("SYNM", 4);
  out.put(static_cast<char>(m.backend));
  out.put(static_cast<char>(m.num_classes));
  put_f64(out, m.train_mse);
  if (m.backend == SynthBackend::Linear) {
    put_array(out, m.intensities);
  } else {
    const auto& r = m.regressor;
    put_u32(out, static_cast<std::uint32_t>(r.patch_radius));
    put_u32(out, static_cast<std::uint32_t>(r.hidden_units));
    put_array(out, r.input_mean);
    put_array(out, r.input_scale);
    put_f64(out, r.target_mean);
    put_f64(out, r.target_scale);
    put_array(out, r.hidden_weights);
    put_array(out, r.hidden_bias);
    put_array(out, r.output_weights);
    put_array(out, r.skip_weights);
    put_f64(out, r.output_bias);
  }
  if (!out) throw IoError("failed writing synthesis model");
}

SynthModel read_synth(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "SYNM", 4) != 0) throw FormatError("not a synthesis model (bad magic)");
  const int backend = in.get();
  const int k = in.get();
  if (!in) throw FormatError("synthesis model truncated");
  SynthModel m;
  m.num_classes = k;
  m.train_mse = get_f64(in);
  if (backend == static_cast<int>(SynthBackend::Linear)) {
    m.backend = SynthBackend::Linear;
    m.intensities = get_array(in);
    if (m.intensities.size() != static_cast<std::size_t>(k)) throw FormatError("linear synthesis model has wrong length");
  } else if (backend == static_cast<int>(SynthBackend::Regressor)) {
    m.backend = SynthBackend::Regressor;
    auto& r = m.regressor;
    r.patch_radius = static_cast<int>(get_u32(in));
    r.hidden_units = static_cast<int>(get_u32(in));
    r.input_mean = get_array(in);
    r.input_scale = get_array(in);
    r.target_mean = get_f64(in);
    r.target_scale = get_f64(in);
    r.hidden_weights = get_array(in);
    r.hidden_bias = get_array(in);
    r.output_weights = get_array(in);
    r.skip_weights = get_array(in);
    r.output_bias = get_f64(in);
    const auto inputs = static_cast<std::size_t>(feature_count(k, r.patch_radius));
    const auto hidden = static_cast<std::size_t>(r.hidden_units);
    if (r.input_mean.size() != inputs || r.input_scale.size() != inputs || r.skip_weights.size() != inputs ||
        r.hidden_weights.size() != hidden * inputs || r.hidden_bias.size() != hidden || r.output_weights.size() != hidden)
      throw FormatError("regressor synthesis model arrays have inconsistent sizes");
  } else {
    throw FormatError("unknown synthesis backend tag");
  }
  return m;
}

void write_synth(const SynthModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_synth(out, m);
}

SynthModel read_synth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_synth(in);
}

}  // namespace camelion
