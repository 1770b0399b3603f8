#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "camelion/error.hpp"
#include "camelion/metrics.hpp"
#include "camelion/random.hpp"
#include "doctest.h"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace camelion;

namespace {

LabelVolume row(std::vector<std::uint8_t> v) {
  VolumeHeader h;
  h.dims = {static_cast<std::uint32_t>(v.size()), 1, 1};
  LabelVolume l(h, 5);
  l.data = std::move(v);
  return l;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

fs::path scratch(const std::string& name) {
  static const struct Remover {
    fs::path path;
    ~Remover() {
      std::error_code ec;
      fs::remove_all(path, ec);
    }
  } root{fs::temp_directory_path() / ("camelion_metrics_" + std::to_string(::getpid()))};
  fs::create_directories(root.path);
  return root.path / name;
}

MethodReport report(const std::string& id, Method m, double base) {
  MethodReport r;
  r.subject_id = id;
  r.method = m;
  for (int c = 0; c < 5; ++c) {
    r.dice.push_back(base + 0.01 * c);
    r.volume_mm3.push_back(1000.0 * (c + 1) + base);
    r.reference_volume_mm3.push_back(1000.0 * (c + 1));
  }
  return r;
}

}  // namespace

TEST_CASE("dice examples") {
  const auto a = row({1, 1, 0, 0, 2});
  CHECK(dice(a, a, 1) == 1.0);
  CHECK(dice(row({1, 1, 0, 0}), row({0, 0, 1, 1}), 1) == 0.0);
  CHECK(dice(row({1, 1, 0, 0}), row({1, 0, 1, 1}), 1) == doctest::Approx(0.4));
  CHECK(dice(row({2, 2}), row({3, 3}), 1) == 1.0);
  CHECK(dice(row({1, 2}), row({3, 3}), 1) == 0.0);
  CHECK_THROWS_AS(dice(row({1}), row({1, 1}), 1), ArgumentError);
}

TEST_CASE("dice properties") {
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const auto a = oracle::random_labels(s, {7, 6, 5}, 5, 0.3);
    const auto b = oracle::random_labels(s + 1000, {7, 6, 5}, 5, 0.3);
    // Relabel classes other than 2 by a permutation that fixes 2.
    auto pa = a, pb = b;
    const std::uint8_t perm[6] = {0, 4, 2, 5, 1, 3};
    for (auto& v : pa.data) v = perm[v];
    for (auto& v : pb.data) v = perm[v];
    for (int k = 1; k <= 5; ++k) {
      const double d = dice(a, b, k);
      CHECK(d >= 0.0);
      CHECK(d <= 1.0);
      CHECK(d == dice(b, a, k));
    }
    CHECK(dice(pa, pb, 2) == dice(a, b, 2));
  }
}

TEST_CASE("volumes") {
  auto l = row({4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 0, 1});
  auto v = volumes(l);
  REQUIRE(v.size() == 5);
  CHECK(v[3] == 10.0);
  CHECK(v[1] == 0.0);
  CHECK(v[0] == 1.0);
  l = row({2, 2, 2});
  l.header.voxel_size = {2.0f, 2.0f, 2.0f};
  CHECK(volumes(l)[1] == 24.0);
}

TEST_CASE("pearson") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> y, z;
  for (double v : x) {
    y.push_back(3 * v + 1);
    z.push_back(-v);
  }
  CHECK(pearson(x, y) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson(x, z) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(pearson(x, std::vector<double>(5, 2.0)), CorrelationError);
  CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}), ArgumentError);
  CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2, 3}), ArgumentError);

  SplitMix rng(4);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> a(10), b(10), a2(10), b2(10);
    const double s1 = 0.1 + 10 * rng.uniform(), s2 = 0.1 + 10 * rng.uniform();
    const double o1 = 100 * rng.uniform() - 50, o2 = 100 * rng.uniform() - 50;
    for (int j = 0; j < 10; ++j) {
      a[j] = rng.uniform();
      b[j] = a[j] + rng.uniform();
      a2[j] = s1 * a[j] + o1;
      b2[j] = s2 * b[j] + o2;
    }
    const double r = pearson(a, b);
    CHECK(r >= -1.0);
    CHECK(r <= 1.0);
    CHECK(pearson(a2, b2) == doctest::Approx(r).epsilon(1e-9));
    CHECK(pearson(b, a) == doctest::Approx(r).epsilon(1e-12));
  }
}

TEST_CASE("label change fraction") {
  const auto a = row({0, 1, 2, 3, 4, 5, 1, 2});
  CHECK(label_change_fraction(a, a) == 0.0);
  CHECK(label_change_fraction(row({1, 1}), row({2, 2})) == 1.0);
  CHECK(label_change_fraction(a, row({0, 1, 2, 3, 0, 0, 0, 0})) == 0.5);
  CHECK_THROWS_AS(label_change_fraction(a, row({1})), ArgumentError);
  for (std::uint64_t s = 1; s <= 30; ++s) {
    const auto x = oracle::random_labels(s, {5, 5, 5}, 5, 0.4);
    const auto y = oracle::random_labels(s + 100, {5, 5, 5}, 5, 0.4);
    const auto z = oracle::random_labels(s + 200, {5, 5, 5}, 5, 0.4);
    const double xz = label_change_fraction(x, z);
    CHECK(xz >= 0.0);
    CHECK(xz <= 1.0);
    CHECK(xz <= label_change_fraction(x, y) + label_change_fraction(y, z) + 1e-15);
  }
}

TEST_CASE("method names") {
  for (Method m : {Method::Direct, Method::Nhm, Method::Camelion}) CHECK(method_from_string(to_string(m)) == m);
  CHECK(to_string(Method::Nhm) == "nhm");
  CHECK_THROWS_AS(method_from_string("fancy"), ArgumentError);
  CHECK(reported_classes(false) == std::vector<int>{2, 3, 4, 5});
  CHECK(reported_classes(true) == std::vector<int>{1, 2, 3, 4, 5});
}

TEST_CASE("report CSV") {
  const auto classes = reported_classes(false);
  SUBCASE("empty list writes only the header") {
    const auto p = scratch("empty.csv");
    write_report({}, classes, p);
    CHECK(slurp(p) == "subject_id,method,class_name,dice,volume_mm3,reference_volume_mm3\n");
  }
  SUBCASE("rows, order and determinism") {
    const auto p = scratch("dice.csv");
    write_report({report("s1", Method::Camelion, 0.9), report("s1", Method::Direct, 0.5), report("s1", Method::Nhm, 0.7)},
                 classes, p);
    const auto l = lines(slurp(p));
    REQUIRE(l.size() == 13);
    CHECK(l[1] == "s1,direct,ventricle,0.510000,2000.500,2000.000");
    CHECK(l[5].rfind("s1,nhm,ventricle,", 0) == 0);
    CHECK(l[12].rfind("s1,camelion,brainstem,", 0) == 0);
    const auto q = scratch("dice2.csv");
    write_report({report("s1", Method::Nhm, 0.7), report("s1", Method::Camelion, 0.9), report("s1", Method::Direct, 0.5)},
                 classes, q);
    CHECK(slurp(p) == slurp(q));
  }
  SUBCASE("unwritable path") {
    CHECK_THROWS_AS(write_report({}, classes, "/nonexistent/dir/dice.csv"), IoError);
  }
}

TEST_CASE("trajectory and correlation CSVs") {
  EvalReport r;
  r.iterations_run = 2;
  r.label_change_fraction = {0.2, 0.01};
  r.dice_trajectory = {{0.1, 0.2, 0.3, 0.4, 0.5}, {0.2, 0.3, 0.4, 0.5, 0.6}, {0.3, 0.4, 0.5, 0.6, 0.7}};
  const auto p = scratch("traj.csv");
  write_trajectory(r, {3, 4}, p);
  CHECK(slurp(p) ==
        "iteration,label_change_fraction,dice_gm,dice_wm\n"
        "0,,0.300000,0.400000\n"
        "1,0.200000,0.400000,0.500000\n"
        "2,0.010000,0.500000,0.600000\n");
  r.dice_trajectory.clear();
  write_trajectory(r, {3}, p);
  CHECK(lines(slurp(p))[2] == "1,0.200000,");

  const auto c = scratch("corr.csv");
  write_correlations({{4, Method::Camelion, 0.9, 8}, {3, Method::Nhm, -0.25, 8}, {3, Method::Direct, 0.5, 8}}, c);
  CHECK(slurp(c) ==
        "class_name,method,pearson_r,n_subjects\n"
        "gm,direct,0.500000,8\n"
        "gm,nhm,-0.250000,8\n"
        "wm,camelion,0.900000,8\n");
  CHECK(format_number(-0.0000001) == "0.000000");
}
