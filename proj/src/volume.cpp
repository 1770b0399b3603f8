#include "camelion/volume.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "camelion/error.hpp"

namespace camelion {

std::string class_name(int label) {
  switch (label) {
    case 0: return "background";
    case 1: return "csf";
    case 2: return "ventricle";
    case 3: return "gm";
    case 4: return "wm";
    case 5: return "brainstem";
    default: return "class" + std::to_string(label);
  }
}

void VolumeHeader::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw ArgumentError("volume dimension " + std::to_string(a) + " is zero");
    if (!(voxel_size[a] > 0.0f) || !std::isfinite(voxel_size[a]))
      throw ArgumentError("voxel size along axis " + std::to_string(a) + " must be positive and finite");
  }
}

void require_same_header(const VolumeHeader& a, const VolumeHeader& b, const char* what) {
  if (!(a == b)) {
    std::ostringstream msg;
    msg << what << ": header mismatch (" << a.dims[0] << 'x' << a.dims[1] << 'x' << a.dims[2] << " vs "
        << b.dims[0] << 'x' << b.dims[1] << 'x' << b.dims[2] << ")";
    throw ArgumentError(msg.str());
  }
}

void ScalarVolume::validate() const {
  header.validate();
  if (data.size() != header.num_voxels()) throw ArgumentError("scalar volume payload length does not match dims");
  for (float v : data)
    if (!std::isfinite(v)) throw ArgumentError("scalar volume contains a non-finite value");
}

void LabelVolume::validate() const {
  header.validate();
  if (data.size() != header.num_voxels()) throw ArgumentError("label volume payload length does not match dims");
  if (num_classes < 1 || num_classes > 255) throw ArgumentError("label volume class count out of range");
  for (auto v : data)
    if (v > num_classes) throw ArgumentError("label value " + std::to_string(v) + " exceeds class count");
}

std::vector<std::size_t> LabelVolume::counts() const {
  std::vector<std::size_t> c(static_cast<std::size_t>(num_classes) + 1, 0);
  for (auto v : data)
    if (v < c.size()) ++c[v];
  return c;
}

bool PartialVolumeSet::is_background(std::size_t voxel) const {
  for (int c = 0; c < num_classes; ++c)
    if (at(c, voxel) != 0.0f) return false;
  return true;
}

std::string check_partial_volumes(const PartialVolumeSet& pv, const PvValidationOptions& opts) {
  const std::size_t n = pv.header.num_voxels();
  if (pv.num_classes < 1) return "partial volume set has no channels";
  if (pv.data.size() != n * static_cast<std::size_t>(pv.num_classes)) return "payload length does not match dims x K";
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    int nonzero = 0;
    for (int c = 0; c < pv.num_classes; ++c) {
      const float p = pv.at(c, j);
      if (!(p >= 0.0f && p <= 1.0f)) {
        std::ostringstream msg;
        msg << "voxel " << j << " channel " << c << " value " << p << " outside [0,1]";
        return msg.str();
      }
      sum += p;
      if (p != 0.0f) ++nonzero;
    }
    if (nonzero == 0) continue;  // background
    if (std::abs(sum - 1.0) > opts.sum_tolerance) {
      std::ostringstream msg;
      msg << "voxel " << j << " fractions sum to " << sum;
      return msg.str();
    }
    if (opts.require_at_most_two && nonzero > 2) {
      std::ostringstream msg;
      msg << "voxel " << j << " has " << nonzero << " nonzero channels";
      return msg.str();
    }
  }
  return {};
}

void validate_partial_volumes(const PartialVolumeSet& pv, const PvValidationOptions& opts) {
  if (auto msg = check_partial_volumes(pv, opts); !msg.empty()) throw ArgumentError("invalid partial volumes: " + msg);
}

void AtlasPair::validate() const {
  image.validate();
  labels.validate();
  require_same_header(image.header, labels.header, "atlas pair");
  if (precomputed_pv) require_same_header(image.header, precomputed_pv->header, "atlas partial volumes");
}

namespace {

class Fnv1a {
 public:
  void add(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= b[i];
      h_ *= 0x100000001B3ull;
    }
  }
  void add_header(const VolumeHeader& h) {
    add(h.dims.data(), sizeof(h.dims));
    add(h.voxel_size.data(), sizeof(h.voxel_size));
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xCBF29CE484222325ull;
};

}  // namespace

std::uint64_t checksum(const ScalarVolume& v) {
  Fnv1a h;
  h.add_header(v.header);
  h.add(v.data.data(), v.data.size() * sizeof(float));
  return h.value();
}

std::uint64_t checksum(const LabelVolume& v) {
  Fnv1a h;
  h.add_header(v.header);
  h.add(&v.num_classes, sizeof(v.num_classes));
  h.add(v.data.data(), v.data.size());
  return h.value();
}

}  // namespace camelion
