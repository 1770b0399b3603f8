#include <cmath>
#include <vector>

#include "camelion/error.hpp"
#include "camelion/harmonizer.hpp"
#include "camelion/phantom.hpp"
#include "camelion/random.hpp"
#include "doctest.h"

using namespace camelion;

namespace {

VolumeHeader grid(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
  VolumeHeader h;
  h.dims = {x, y, z};
  return h;
}

std::vector<char> all(const ScalarVolume& v) { return std::vector<char>(v.size(), 1); }

}  // namespace

TEST_CASE("default percentiles") {
  CHECK(default_percentiles() == std::vector<double>{1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 99});
}

TEST_CASE("landmarks") {
  SUBCASE("constant image") {
    const ScalarVolume img(grid(10, 10, 2), 42.0f);
    for (double l : landmarks(img, all(img), default_percentiles())) CHECK(l == 42.0);
  }
  SUBCASE("uniform ramp") {
    ScalarVolume img(grid(1001, 1, 1));
    for (std::size_t j = 0; j < img.size(); ++j) img.data[j] = static_cast<float>(j) / 10.0f;
    const auto p = default_percentiles();
    const auto l = landmarks(img, all(img), p);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(l[i] - p[i]) <= 0.5);
  }
  SUBCASE("nondecreasing on random data, mask respected") {
    ScalarVolume img(grid(20, 20, 5));
    SplitMix rng(3);
    for (auto& v : img.data) v = static_cast<float>(1000.0 * rng.uniform() - 300.0);
    std::vector<char> mask(img.size(), 0);
    for (std::size_t j = 0; j < img.size(); j += 2) mask[j] = 1;
    const auto l = landmarks(img, mask, {0.5, 5, 33, 50, 77, 99.5});
    for (std::size_t i = 1; i < l.size(); ++i) CHECK(l[i] >= l[i - 1]);
    ScalarVolume hidden = img;
    for (std::size_t j = 1; j < img.size(); j += 2) hidden.data[j] = 1e6f;
    CHECK(landmarks(hidden, mask, {0.5, 5, 33, 50, 77, 99.5}) == l);
  }
  SUBCASE("errors") {
    const ScalarVolume img(grid(10, 9, 1), 1.0f);
    CHECK_THROWS_AS(landmarks(img, all(img), default_percentiles()), ArgumentError);
    const ScalarVolume big(grid(10, 10, 1), 1.0f);
    CHECK_THROWS_AS(landmarks(big, all(big), {50, 10}), ArgumentError);
    CHECK_THROWS_AS(landmarks(big, all(big), {0, 50}), ArgumentError);
  }
}

TEST_CASE("build_map") {
  const std::vector<double> s{10, 20, 40, 80};
  SUBCASE("identity") {
    const auto m = build_map(s, s);
    for (double x = 10; x <= 80; x += 0.37) CHECK(m(x) == doctest::Approx(x).epsilon(1e-12));
  }
  SUBCASE("doubling") {
    const auto m = build_map(s, {20, 40, 80, 160});
    for (double x = 10; x <= 80; x += 0.37) CHECK(m(x) == doctest::Approx(2 * x).epsilon(1e-12));
    CHECK(m(0.0) == doctest::Approx(0.0));
    CHECK(m(100.0) == doctest::Approx(200.0));
  }
  SUBCASE("end-segment extrapolation") {
    const auto m = build_map({0, 10, 20}, {0, 10, 40});
    CHECK(m(-5.0) == doctest::Approx(-5.0));
    CHECK(m(25.0) == doctest::Approx(55.0));
    CHECK(m(15.0) == doctest::Approx(25.0));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(build_map({10, 20, 20, 30}, {1, 2, 3, 4}), ArgumentError);
    CHECK_THROWS_AS(build_map({10, 30, 20}, {1, 2, 3}), ArgumentError);
    CHECK_THROWS_AS(build_map({10, 20, 30}, {3, 2, 1}), ArgumentError);
    CHECK_THROWS_AS(build_map({10, 20}, {1, 2, 3}), ArgumentError);
    CHECK_THROWS_AS(build_map({10}, {1}), ArgumentError);
  }
}

TEST_CASE("apply") {
  ScalarVolume img(grid(30, 30, 3));
  SplitMix rng(5);
  for (auto& v : img.data) v = static_cast<float>(150.0 * rng.uniform());
  std::vector<char> mask(img.size(), 1);
  mask[0] = mask[7] = 0;

  SUBCASE("identity leaves the image unchanged") {
    const auto l = landmarks(img, mask, default_percentiles());
    const auto out = apply(build_map(l, l), img, mask);
    for (std::size_t j = 0; j < img.size(); ++j) CHECK(std::abs(out.data[j] - img.data[j]) <= 1e-6 * 150);
  }
  SUBCASE("monotone and mask-global") {
    const auto m = build_map({0, 30, 60, 150}, {5, 10, 90, 100});
    const auto out = apply(m, img, mask);
    CHECK(out.data[0] == img.data[0]);
    CHECK(out.data[7] == img.data[7]);
    for (std::size_t i = 1; i < img.size(); ++i)
      for (std::size_t j : {i - 1, (i * 7919) % img.size()}) {
        if (!mask[i] || !mask[j]) continue;
        if (img.data[i] <= img.data[j]) CHECK(out.data[i] <= out.data[j]);
        if (img.data[i] == img.data[j]) CHECK(out.data[i] == out.data[j]);
      }
  }
}

TEST_CASE("protocol-B image matched to a protocol-A reference") {
  const PhantomParams p;
  const auto ref = make_subject(p, 0, default_protocol_a(), default_protocol_b());
  const auto test = make_subject(p, 9, default_protocol_a(), default_protocol_b());
  const auto pct = default_percentiles();
  const auto out = match_histogram(test.image_b, ref.image_a, ref.labels, pct);
  const auto ref_l = landmarks(ref.image_a, foreground_mask(ref.image_a, &ref.labels), pct);
  const auto out_l = landmarks(out, foreground_mask(test.image_b), pct);
  for (std::size_t i = 0; i < pct.size(); ++i)
    CHECK_MESSAGE(std::abs(out_l[i] - ref_l[i]) <= 0.02 * std::abs(ref_l[i]), "percentile " << pct[i]);
}

TEST_CASE("foreground mask") {
  ScalarVolume img(grid(4, 1, 1));
  img.data = {0, 3, -1, 5};
  CHECK(foreground_mask(img) == std::vector<char>{0, 1, 0, 1});
  LabelVolume l(img.header, 5);
  l.data = {2, 0, 1, 0};
  CHECK(foreground_mask(img, &l) == std::vector<char>{1, 0, 1, 0});
}
