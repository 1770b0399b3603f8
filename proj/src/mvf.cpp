#include "camelion/mvf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "camelion/error.hpp"

namespace camelion {
namespace {

constexpr char kMagic[4] = {'M', 'V', 'F', '1'};

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f32(std::vector<unsigned char>& buf, float v) { put_u32(buf, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

std::vector<unsigned char> encode_header(MvfKind kind, int k, const VolumeHeader& h) {
  std::vector<unsigned char> buf(kMagic, kMagic + 4);
  buf.push_back(static_cast<unsigned char>(kind));
  buf.push_back(static_cast<unsigned char>(k));
  for (auto d : h.dims) put_u32(buf, d);
  for (auto s : h.voxel_size) put_f32(buf, s);
  return buf;
}

void write_floats(std::ostream& out, std::span<const float> values) {
  std::vector<unsigned char> buf;
  buf.reserve(values.size() * 4);
  for (float v : values) put_f32(buf, v);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void check_stream(std::ostream& out) {
  if (!out) throw IoError("failed writing MVF stream");
}

void read_exact(std::istream& in, unsigned char* dst, std::size_t n, const char* what) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError(std::string("MVF truncated while reading ") + what);
}

std::vector<float> read_floats(std::istream& in, std::size_t n) {
  std::vector<unsigned char> raw(n * 4);
  read_exact(in, raw.data(), raw.size(), "payload");
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = get_f32(raw.data() + 4 * i);
  return out;
}

template <class V>
void write_file(const V& v, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_mvf(out, v);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void write_mvf(std::ostream& out, const ScalarVolume& v) {
  v.header.validate();
  const auto head = encode_header(MvfKind::Scalar, 0, v.header);
  out.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
  write_floats(out, v.data);
  check_stream(out);
}

void write_mvf(std::ostream& out, const LabelVolume& v) {
  v.header.validate();
  const auto head = encode_header(MvfKind::Label, v.num_classes, v.header);
  out.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
  out.write(reinterpret_cast<const char*>(v.data.data()), static_cast<std::streamsize>(v.data.size()));
  check_stream(out);
}

void write_mvf(std::ostream& out, const PartialVolumeSet& v) {
  v.header.validate();
  const auto head = encode_header(MvfKind::PartialVolume, v.num_classes, v.header);
  out.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
  write_floats(out, v.data);
  check_stream(out);
}

AnyVolume read_mvf(std::istream& in) {
  unsigned char head[kMvfHeaderBytes];
  read_exact(in, head, kMvfHeaderBytes, "header");
  if (std::memcmp(head, kMagic, 4) != 0) throw FormatError("not an MVF file (bad magic)");
  const unsigned kind = head[4];
  const int k = head[5];
  VolumeHeader h;
  for (int a = 0; a < 3; ++a) {
    h.dims[a] = get_u32(head + 6 + 4 * a);
    h.voxel_size[a] = get_f32(head + 18 + 4 * a);
  }
  for (int a = 0; a < 3; ++a)
    if (h.dims[a] == 0) throw FormatError("MVF header has a zero dimension");
  try {
    h.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("MVF header invalid: ") + e.what());
  }
  const std::size_t n = h.num_voxels();
  switch (static_cast<MvfKind>(kind)) {
    case MvfKind::Scalar: {
      ScalarVolume v;
      v.header = h;
      v.data = read_floats(in, n);
      return v;
    }
    case MvfKind::Label: {
      if (k < 1) throw FormatError("MVF label volume with zero classes");
      LabelVolume v(h, k);
      read_exact(in, v.data.data(), n, "payload");
      for (auto x : v.data)
        if (x > k) throw FormatError("MVF label value exceeds class count");
      return v;
    }
    case MvfKind::PartialVolume: {
      if (k < 1) throw FormatError("MVF partial volume set with zero channels");
      PartialVolumeSet v;
      v.header = h;
      v.num_classes = k;
      v.data = read_floats(in, n * static_cast<std::size_t>(k));
      return v;
    }
  }
  throw FormatError("MVF kind byte " + std::to_string(kind) + " is not 1, 2 or 3");
}

void write_mvf(const ScalarVolume& v, const std::filesystem::path& path) { write_file(v, path); }
void write_mvf(const LabelVolume& v, const std::filesystem::path& path) { write_file(v, path); }
void write_mvf(const PartialVolumeSet& v, const std::filesystem::path& path) { write_file(v, path); }

AnyVolume read_mvf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_mvf(in);
}

namespace {
template <class V>
V read_typed(const std::filesystem::path& path, const char* kind) {
  auto any = read_mvf(path);
  if (auto* v = std::get_if<V>(&any)) return std::move(*v);
  throw FormatError(path.string() + " does not hold a " + kind + " volume");
}
}  // namespace

ScalarVolume read_scalar_mvf(const std::filesystem::path& path) { return read_typed<ScalarVolume>(path, "scalar"); }
LabelVolume read_label_mvf(const std::filesystem::path& path) { return read_typed<LabelVolume>(path, "label"); }
PartialVolumeSet read_pv_mvf(const std::filesystem::path& path) {
  return read_typed<PartialVolumeSet>(path, "partial-volume");
}

}  // namespace camelion
