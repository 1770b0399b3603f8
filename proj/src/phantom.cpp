#include "camelion/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"

#include "camelion/error.hpp"
#include "camelion/mvf.hpp"
#include "camelion/parallel.hpp"
#include "camelion/random.hpp"

namespace camelion {

void PhantomParams::validate() const {
  for (auto d : base_dims)
    if (d < 1) throw ArgumentError("phantom base_dims must be positive");
  for (auto s : voxel_size)
    if (!(s > 0.0f) || !std::isfinite(s)) throw ArgumentError("phantom voxel_size must be positive");
  if (supersample < 2) throw ArgumentError("phantom supersample must be >= 2");
  if (!(shape_jitter >= 0.0 && shape_jitter <= 0.3)) throw ArgumentError("phantom shape_jitter must lie in [0, 0.3]");
}

void ProtocolParams::validate() const {
  if (class_means.size() != static_cast<std::size_t>(kNumTissueClasses))
    throw ArgumentError("protocol needs one mean per tissue class");
  for (std::size_t a = 0; a < class_means.size(); ++a) {
    if (!std::isfinite(class_means[a])) throw ArgumentError("protocol class mean is not finite");
    for (std::size_t b = a + 1; b < class_means.size(); ++b)
      if (class_means[a] == class_means[b]) throw ArgumentError("protocol class means must be pairwise distinct");
  }
  if (!(noise_sigma >= 0.0)) throw ArgumentError("protocol noise_sigma must be >= 0");
  if (!(gamma >= 0.3 && gamma <= 3.0)) throw ArgumentError("protocol gamma must lie in [0.3, 3]");
  if (!(bias_amplitude >= 0.0 && bias_amplitude < 1.0)) throw ArgumentError("protocol bias_amplitude must lie in [0, 1)");
}

ProtocolParams default_protocol_a() { return {{25.0, 15.0, 60.0, 100.0, 80.0}, 3.0, 1.0, 0.0}; }
ProtocolParams default_protocol_b() { return {{35.0, 20.0, 75.0, 95.0, 85.0}, 3.0, 0.7, 0.1}; }

namespace {

struct Ellipsoid {
  std::array<double, 3> center;
  std::array<double, 3> radii;
  bool contains(double x, double y, double z) const {
    const double dx = (x - center[0]) / radii[0];
    const double dy = (y - center[1]) / radii[1];
    const double dz = (z - center[2]) / radii[2];
    return dx * dx + dy * dy + dz * dz <= 1.0;
  }
};

// Shape of one subject in normalized coordinates [-1, 1]^3 (x left-right,
// y posterior-anterior, z inferior-superior).
struct HeadShape {
  std::array<double, 3> outer;  // semi-axes of the brain surface
  double csf_thickness;         // in units of the normalized ellipsoidal radius
  double gm_thickness;
  double fold_depth;
  double fold_phase_theta;
  double fold_phase_phi;
  std::array<Ellipsoid, 2> ventricles;
  double stem_radius;
  double stem_y;
  double stem_top;
  double stem_bottom;

  static HeadShape sample(std::uint64_t seed, int subject, double jitter) {
    SplitMix rng(hash_counter(seed, static_cast<std::uint64_t>(subject)));
    auto jit = [&](double v) { return v * (1.0 + jitter * rng.uniform(-1.0, 1.0)); };
    HeadShape s;
    s.outer = {jit(0.864), jit(0.95), jit(0.82)};
    s.csf_thickness = jit(0.10);
    s.gm_thickness = jit(0.12);
    s.fold_depth = jit(0.08);
    s.fold_phase_theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    s.fold_phase_phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (int side = 0; side < 2; ++side) {
      const double sign = side == 0 ? -1.0 : 1.0;
      s.ventricles[side] = {{sign * jit(0.15), 0.06, 0.14}, {jit(0.09), jit(0.26), jit(0.11)}};
    }
    s.stem_radius = jit(0.13);
    s.stem_y = -0.14;
    s.stem_top = -0.08;
    s.stem_bottom = -0.96;
    return s;
  }

  std::uint8_t label_at(double x, double y, double z) const {
    if (z <= stem_top && z >= stem_bottom) {
      const double dy = y - stem_y;
      if (x * x + dy * dy <= stem_radius * stem_radius) return static_cast<std::uint8_t>(Tissue::Brainstem);
    }
    const double ex = x / outer[0];
    const double ey = y / outer[1];
    const double ez = z / outer[2];
    const double rho = std::sqrt(ex * ex + ey * ey + ez * ez);
    if (rho > 1.0) return static_cast<std::uint8_t>(Tissue::Background);
    if (rho > 1.0 - csf_thickness) return static_cast<std::uint8_t>(Tissue::Csf);
    const double gm_inner = 1.0 - csf_thickness - gm_thickness;
    if (rho > gm_inner) return static_cast<std::uint8_t>(Tissue::GrayMatter);
    if (rho > gm_inner - fold_depth) {
      // Gyral folding: the gray-matter ribbon dips into white matter along a
      // smooth angular pattern.
      const double theta = std::atan2(ey, ex);
      const double phi = std::acos(std::clamp(ez / std::max(rho, 1e-12), -1.0, 1.0));
      const double fold = 0.5 * (1.0 + std::sin(5.0 * theta + fold_phase_theta) * std::sin(4.0 * phi + fold_phase_phi));
      if (rho > gm_inner - fold_depth * fold) return static_cast<std::uint8_t>(Tissue::GrayMatter);
    }
    for (const auto& v : ventricles)
      if (v.contains(x, y, z)) return static_cast<std::uint8_t>(Tissue::Ventricle);
    return static_cast<std::uint8_t>(Tissue::WhiteMatter);
  }
};

}  // namespace

LabelVolume generate_label_phantom(const PhantomParams& params, int subject_index) {
  params.validate();
  VolumeHeader h;
  for (int a = 0; a < 3; ++a) {
    h.dims[a] = params.base_dims[a] * static_cast<std::uint32_t>(params.supersample);
    h.voxel_size[a] = params.voxel_size[a] / static_cast<float>(params.supersample);
  }
  const HeadShape shape = HeadShape::sample(params.seed, subject_index, params.shape_jitter);
  LabelVolume out(h, kNumTissueClasses);
  const std::size_t nx = h.dims[0], ny = h.dims[1], nz = h.dims[2];
  parallel_for(nz, [&](std::size_t z0, std::size_t z1) {
    for (std::size_t z = z0; z < z1; ++z) {
      const double uz = (static_cast<double>(z) + 0.5) / static_cast<double>(nz) * 2.0 - 1.0;
      for (std::size_t y = 0; y < ny; ++y) {
        const double uy = (static_cast<double>(y) + 0.5) / static_cast<double>(ny) * 2.0 - 1.0;
        for (std::size_t x = 0; x < nx; ++x) {
          const double ux = (static_cast<double>(x) + 0.5) / static_cast<double>(nx) * 2.0 - 1.0;
          out.data[h.index(x, y, z)] = shape.label_at(ux, uy, uz);
        }
      }
    }
  });
  return out;
}

PartialVolumeSet downsample_to_pv(const LabelVolume& hr, int factor) {
  if (factor < 1) throw ArgumentError("downsample factor must be positive");
  VolumeHeader lo;
  for (int a = 0; a < 3; ++a) {
    if (hr.header.dims[a] % static_cast<std::uint32_t>(factor) != 0)
      throw ArgumentError("high-res dims are not divisible by the downsample factor");
    lo.dims[a] = hr.header.dims[a] / static_cast<std::uint32_t>(factor);
    lo.voxel_size[a] = hr.header.voxel_size[a] * static_cast<float>(factor);
  }
  const int k = hr.num_classes;
  PartialVolumeSet pv(lo, k);
  const auto f = static_cast<std::size_t>(factor);
  const std::size_t cells = f * f * f;
  parallel_for(lo.dims[2], [&](std::size_t z0, std::size_t z1) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(k) + 1);
    for (std::size_t z = z0; z < z1; ++z)
      for (std::size_t y = 0; y < lo.dims[1]; ++y)
        for (std::size_t x = 0; x < lo.dims[0]; ++x) {
          std::fill(counts.begin(), counts.end(), 0);
          for (std::size_t dz = 0; dz < f; ++dz)
            for (std::size_t dy = 0; dy < f; ++dy)
              for (std::size_t dx = 0; dx < f; ++dx) ++counts[hr.data[hr.header.index(x * f + dx, y * f + dy, z * f + dz)]];
          const std::size_t tissue = cells - counts[0];
          if (2 * tissue < cells) continue;
          const std::size_t j = lo.index(x, y, z);
          for (int c = 0; c < k; ++c)
            pv.at(c, j) = static_cast<float>(static_cast<double>(counts[static_cast<std::size_t>(c) + 1]) /
                                             static_cast<double>(tissue));
        }
  });
  return pv;
}

PartialVolumeSet truncate_to_two_classes(const PartialVolumeSet& pv) {
  PartialVolumeSet out = pv;
  const std::size_t n = pv.header.num_voxels();
  for (std::size_t j = 0; j < n; ++j) {
    int nonzero = 0;
    for (int c = 0; c < pv.num_classes; ++c) nonzero += pv.at(c, j) != 0.0f;
    if (nonzero <= 2) continue;
    int first = -1, second = -1;
    for (int c = 0; c < pv.num_classes; ++c) {
      const float p = pv.at(c, j);
      if (first < 0 || p > pv.at(first, j)) {
        second = first;
        first = c;
      } else if (second < 0 || p > pv.at(second, j)) {
        second = c;
      }
    }
    const double total = double{pv.at(first, j)} + double{pv.at(second, j)};
    for (int c = 0; c < pv.num_classes; ++c) out.at(c, j) = 0.0f;
    const auto pf = static_cast<float>(double{pv.at(first, j)} / total);
    out.at(first, j) = pf;
    out.at(second, j) = 1.0f - pf;
  }
  return out;
}

LabelVolume pv_to_labels(const PartialVolumeSet& pv) {
  LabelVolume out(pv.header, pv.num_classes);
  const std::size_t n = pv.header.num_voxels();
  for (std::size_t j = 0; j < n; ++j) {
    int best = -1;
    float best_p = 0.0f;
    for (int c = 0; c < pv.num_classes; ++c) {
      const float p = pv.at(c, j);
      if (p > best_p) {
        best_p = p;
        best = c;
      }
    }
    out.data[j] = static_cast<std::uint8_t>(best + 1);
  }
  return out;
}

double bias_field(const VolumeHeader& h, std::size_t x, std::size_t y, std::size_t z, double amplitude) {
  auto norm = [](std::size_t i, std::uint32_t n) {
    return (static_cast<double>(i) + 0.5) / static_cast<double>(n) * 2.0 - 1.0;
  };
  const double ux = norm(x, h.dims[0]);
  const double uy = norm(y, h.dims[1]);
  const double uz = norm(z, h.dims[2]);
  return 1.0 + amplitude * (0.5 * ux + 0.3 * uy + 0.2 * (2.0 * uz * uz - 1.0));
}

namespace {

ScalarVolume render_impl(const PartialVolumeSet& pv, const ProtocolParams& proto, const std::uint64_t* seed) {
  proto.validate();
  if (pv.num_classes != static_cast<int>(proto.class_means.size()))
    throw ArgumentError("render: protocol class count does not match partial volumes");
  const double x_max = *std::max_element(proto.class_means.begin(), proto.class_means.end());
  const VolumeHeader& h = pv.header;
  ScalarVolume out(h);
  parallel_for(h.dims[2], [&](std::size_t z0, std::size_t z1) {
    for (std::size_t z = z0; z < z1; ++z)
      for (std::size_t y = 0; y < h.dims[1]; ++y)
        for (std::size_t x = 0; x < h.dims[0]; ++x) {
          const std::size_t j = h.index(x, y, z);
          if (pv.is_background(j)) continue;
          double mix = 0.0;
          for (int c = 0; c < pv.num_classes; ++c) mix += double{pv.at(c, j)} * proto.class_means[static_cast<std::size_t>(c)];
          double v = bias_field(h, x, y, z, proto.bias_amplitude) * mix;
          if (proto.gamma != 1.0) v = x_max * std::pow(std::max(v, 0.0) / x_max, proto.gamma);
          if (seed != nullptr && proto.noise_sigma > 0.0) v += proto.noise_sigma * counter_normal(*seed, j);
          out.data[j] = static_cast<float>(v);
        }
  });
  return out;
}

}  // namespace

ScalarVolume render(const PartialVolumeSet& pv, const ProtocolParams& proto, std::uint64_t seed) {
  return render_impl(pv, proto, &seed);
}

ScalarVolume render_noiseless(const PartialVolumeSet& pv, const ProtocolParams& proto) {
  return render_impl(pv, proto, nullptr);
}

std::string to_string(SubjectRole r) { return r == SubjectRole::Atlas ? "atlas" : "test"; }

std::vector<const ManifestEntry*> Manifest::with_role(SubjectRole role) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& s : subjects)
    if (s.role == role) out.push_back(&s);
  return out;
}

const ManifestEntry& Manifest::find(const std::string& id) const {
  for (const auto& s : subjects)
    if (s.id == id) return s;
  throw ArgumentError("subject '" + id + "' is not in the manifest");
}

PhantomSubject make_subject(const PhantomParams& params, int subject_index, const ProtocolParams& proto_a,
                            const ProtocolParams& proto_b) {
  PhantomSubject s;
  const LabelVolume hr = generate_label_phantom(params, subject_index);
  s.pv = truncate_to_two_classes(downsample_to_pv(hr, params.supersample));
  s.labels = pv_to_labels(s.pv);
  const auto base = hash_counter(params.seed, 0x5EED0000ull + static_cast<std::uint64_t>(subject_index));
  s.image_a = render(s.pv, proto_a, hash_counter(base, 0xA));
  s.image_b = render(s.pv, proto_b, hash_counter(base, 0xB));
  return s;
}

Manifest generate_cohort(const PhantomParams& params, int n_atlas, int n_test, const ProtocolParams& proto_a,
                         const ProtocolParams& proto_b, const std::filesystem::path& out_dir) {
  if (n_atlas < 1 || n_test < 1) throw ArgumentError("cohort needs at least one atlas and one test subject");
  params.validate();
  proto_a.validate();
  proto_b.validate();
  Manifest m;
  m.root = out_dir;
  try {
    std::filesystem::create_directories(out_dir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError(std::string("cannot create cohort directory: ") + e.what());
  }
  for (int i = 0; i < n_atlas + n_test; ++i) {
    ManifestEntry e;
    const bool atlas = i < n_atlas;
    const int local = atlas ? i : i - n_atlas;
    char name[32];
    std::snprintf(name, sizeof name, "%s_%03d", atlas ? "atlas" : "test", local);
    e.id = name;
    e.role = atlas ? SubjectRole::Atlas : SubjectRole::Test;
    e.image_a = std::filesystem::path(e.id) / "image_a.mvf";
    e.image_b = std::filesystem::path(e.id) / "image_b.mvf";
    e.labels = std::filesystem::path(e.id) / "labels.mvf";
    e.pv = std::filesystem::path(e.id) / "pv.mvf";
    const PhantomSubject s = make_subject(params, i, proto_a, proto_b);
    try {
      std::filesystem::create_directories(out_dir / e.id);
    } catch (const std::filesystem::filesystem_error& err) {
      throw IoError(std::string("cannot create subject directory: ") + err.what());
    }
    write_mvf(s.image_a, m.resolve(e.image_a));
    write_mvf(s.image_b, m.resolve(e.image_b));
    write_mvf(s.labels, m.resolve(e.labels));
    write_mvf(s.pv, m.resolve(e.pv));
    m.subjects.push_back(std::move(e));
  }
  write_manifest(m, out_dir / "manifest.json");
  return m;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format"] = "camelion-manifest";
  j["version"] = 1;
  auto& subjects = j["subjects"] = nlohmann::ordered_json::array();
  for (const auto& s : m.subjects) {
    nlohmann::ordered_json e;
    e["id"] = s.id;
    e["role"] = to_string(s.role);
    e["image_a"] = s.image_a.generic_string();
    e["image_b"] = s.image_b.generic_string();
    e["labels"] = s.labels.generic_string();
    e["pv"] = s.pv.generic_string();
    subjects.push_back(std::move(e));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  m.root = path.parent_path();
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& e : j.at("subjects")) {
      ManifestEntry s;
      s.id = e.at("id").get<std::string>();
      const auto role = e.at("role").get<std::string>();
      if (role == "atlas") {
        s.role = SubjectRole::Atlas;
      } else if (role == "test") {
        s.role = SubjectRole::Test;
      } else {
        throw FormatError("manifest role '" + role + "' is neither atlas nor test");
      }
      s.image_a = e.at("image_a").get<std::string>();
      s.image_b = e.at("image_b").get<std::string>();
      s.labels = e.at("labels").get<std::string>();
      s.pv = e.at("pv").get<std::string>();
      m.subjects.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace camelion
