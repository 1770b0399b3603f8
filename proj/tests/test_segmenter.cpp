#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "camelion/error.hpp"
#include "camelion/phantom.hpp"
#include "camelion/random.hpp"
#include "camelion/segmenter.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace camelion;

namespace {

VolumeHeader grid(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
  VolumeHeader h;
  h.dims = {x, y, z};
  return h;
}

// Every class 1..k present, intensities near per-class centres.
AtlasPair random_atlas(std::uint64_t seed, const VolumeHeader& h, int k = 5) {
  AtlasPair a;
  a.labels = oracle::random_labels(seed, h.dims, k, 0.2);
  for (int c = 1; c <= k; ++c) a.labels.data[std::size_t(c - 1)] = static_cast<std::uint8_t>(c);
  a.image = ScalarVolume(h);
  SplitMix rng(seed ^ 0xabcdefULL);
  for (std::size_t j = 0; j < h.num_voxels(); ++j) {
    const int l = a.labels.data[j];
    a.image.data[j] = l == 0 ? 0.0f : static_cast<float>(20.0 * l + 12.0 * (rng.uniform() - 0.5));
  }
  return a;
}

SegmenterConfig plain() {
  SegmenterConfig cfg;
  cfg.smoothing_weight = 0.0;
  cfg.prior_radius = 0;
  return cfg;
}

}  // namespace

TEST_CASE("train: constant class gets the mean and the variance floor") {
  AtlasPair a;
  a.image = ScalarVolume(grid(5, 1, 1));
  a.labels = LabelVolume(grid(5, 1, 1), 2);
  a.labels.data = {0, 1, 1, 2, 2};
  a.image.data = {0, 80, 80, 40, 50};
  const auto m = train(std::span(&a, 1), plain());
  CHECK(m.means[0] == 80.0);
  CHECK(m.variances[0] == doctest::Approx(1e-4 * 80.0 * 80.0));
  CHECK(m.means[1] == 45.0);
  CHECK(m.variances[1] == doctest::Approx(25.0));
  for (double v : m.variances) CHECK(v > 0.0);
}

TEST_CASE("train: pooled mean over atlases") {
  std::vector<AtlasPair> atlases(2);
  for (int i = 0; i < 2; ++i) {
    atlases[i].image = ScalarVolume(grid(4, 1, 1));
    atlases[i].labels = LabelVolume(grid(4, 1, 1), 2);
    atlases[i].labels.data = {1, 1, 2, 2};
  }
  atlases[0].image.data = {80, 80, 10, 10};
  atlases[1].image.data = {100, 100, 10, 10};
  const auto m = train(atlases, plain());
  CHECK(m.means[0] == 90.0);
  CHECK(m.variances[0] == doctest::Approx(100.0));
}

TEST_CASE("label frequency before smoothing") {
  std::vector<AtlasPair> atlases(2);
  for (int i = 0; i < 2; ++i) {
    atlases[i].image = ScalarVolume(grid(2, 1, 1), 1.0f);
    atlases[i].labels = LabelVolume(grid(2, 1, 1), 2);
  }
  atlases[0].labels.data = {1, 2};
  atlases[1].labels.data = {2, 2};
  const auto f = label_frequency(atlases);
  CHECK(f.at(0, 0) == 0.5f);
  CHECK(f.at(1, 0) == 0.5f);
  CHECK(f.at(0, 1) == 0.0f);
  CHECK(f.at(1, 1) == 1.0f);
}

TEST_CASE("prior is floored inside the mask and bounded") {
  const auto h = grid(12, 10, 8);
  std::vector<AtlasPair> atlases{random_atlas(1, h), random_atlas(2, h), random_atlas(3, h)};
  const auto m = train(atlases, SegmenterConfig{});
  std::size_t in_mask = 0;
  for (std::size_t j = 0; j < h.num_voxels(); ++j) {
    bool any = false;
    for (const auto& a : atlases) any = any || a.labels.data[j] != 0;
    double total = 0.0;
    for (int c = 0; c < 5; ++c) {
      const double p = m.prior.at(c, j);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      if (any) CHECK(p > 0.0);
      total += p;
    }
    CHECK(total <= 1.0 + 1e-6);
    if (any) ++in_mask;
    else CHECK(total == 0.0);
  }
  CHECK(in_mask > 0);
}

TEST_CASE("train errors") {
  AtlasPair a = random_atlas(4, grid(6, 6, 6));
  for (auto& l : a.labels.data)
    if (l == 3) l = 2;
  try {
    train(std::span(&a, 1), plain());
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find(class_name(3)) != std::string::npos);
  }
  std::vector<AtlasPair> mismatched{random_atlas(5, grid(6, 6, 6)), random_atlas(6, grid(6, 6, 7))};
  CHECK_THROWS_AS(train(mismatched, plain()), ArgumentError);
  CHECK_THROWS_AS(train(std::span<const AtlasPair>{}, plain()), ArgumentError);
}

TEST_CASE("predict examples") {
  const auto h = grid(6, 6, 6);
  const AtlasPair a = random_atlas(7, h);
  auto m = train(std::span(&a, 1), plain());
  for (std::size_t j = 0; j < h.num_voxels(); ++j)
    for (int c = 0; c < 5; ++c) m.prior.at(c, j) = 0.2f;

  SUBCASE("nearest mean under a uniform prior") {
    const ScalarVolume img(h, static_cast<float>(m.means[1]));
    const auto out = predict(m, img);
    for (auto l : out.labels.data) CHECK(l == 2);
  }
  SUBCASE("zero prior forces zero posterior") {
    for (std::size_t j = 0; j < h.num_voxels(); ++j) m.prior.at(1, j) = 0.0f;
    const ScalarVolume img(h, static_cast<float>(m.means[1]));
    const auto out = predict(m, img);
    for (std::size_t j = 0; j < h.num_voxels(); ++j) {
      CHECK(out.posteriors.at(1, j) == 0.0f);
      CHECK(out.labels.data[j] != 2);
    }
  }
  SUBCASE("header mismatch") {
    CHECK_THROWS_AS(predict(m, ScalarVolume(grid(6, 6, 5), 1.0f)), ArgumentError);
  }
}

TEST_CASE("predict matches brute-force Bayes with smoothing off") {
  const auto h = grid(8, 8, 8);
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    std::vector<AtlasPair> atlases{random_atlas(seed, h), random_atlas(seed + 100, h)};
    const auto m = train(atlases, plain());
    ScalarVolume img(h);
    SplitMix rng(seed * 7);
    for (auto& v : img.data) v = rng.uniform() < 0.1 ? 0.0f : static_cast<float>(5.0 + 110.0 * rng.uniform());
    const auto out = predict(m, img);

    // Recompute the means, variances and floored prior from the definitions.
    for (std::size_t j = 0; j < h.num_voxels(); ++j) {
      bool in_mask = false;
      double prior[5] = {};
      for (const auto& a : atlases) {
        const int l = a.labels.data[j];
        if (l != 0) {
          in_mask = true;
          prior[l - 1] += 0.5;
        }
      }
      if (!in_mask || img.data[j] <= 0.0f) {
        CHECK(out.labels.data[j] == 0);
        continue;
      }
      double total = 0.0;
      for (double& p : prior) {
        p = std::max(p, 0.01);
        total += p;
      }
      if (total > 1.0)
        for (double& p : prior) p /= total;
      double best = -1.0;
      int best_label = 0;
      double post[5], z = 0.0;
      for (int c = 0; c < 5; ++c) {
        const double var = m.variances[std::size_t(c)];
        const double d = img.data[j] - m.means[std::size_t(c)];
        post[c] = std::exp(-d * d / (2 * var)) / std::sqrt(2 * std::numbers::pi * var) * double(float(prior[c]));
        z += post[c];
        if (post[c] > best) {
          best = post[c];
          best_label = c + 1;
        }
      }
      CHECK(out.labels.data[j] == best_label);
      double sum = 0.0;
      for (int c = 0; c < 5; ++c) {
        CHECK(out.posteriors.at(c, j) == doctest::Approx(post[c] / z).epsilon(1e-5));
        sum += out.posteriors.at(c, j);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("posteriors sum to one inside the mask and labels are their argmax without smoothing") {
  const auto h = grid(10, 9, 8);
  std::vector<AtlasPair> atlases{random_atlas(21, h), random_atlas(22, h)};
  const auto m = train(atlases, SegmenterConfig{.smoothing_weight = 0.0});
  const auto out = predict(m, atlases[0].image);
  for (std::size_t j = 0; j < h.num_voxels(); ++j) {
    if (out.labels.data[j] == 0) continue;
    double sum = 0.0;
    int arg = 0;
    float best = -1.0f;
    for (int c = 0; c < 5; ++c) {
      sum += out.posteriors.at(c, j);
      if (out.posteriors.at(c, j) > best) {
        best = out.posteriors.at(c, j);
        arg = c + 1;
      }
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);
    CHECK(out.labels.data[j] == arg);
  }
}

TEST_CASE("atlas order does not change the trained model") {
  const auto h = grid(9, 8, 7);
  std::vector<AtlasPair> atlases{random_atlas(31, h), random_atlas(32, h), random_atlas(33, h)};
  const auto m = train(atlases, SegmenterConfig{});
  std::vector<AtlasPair> rev{atlases[2], atlases[0], atlases[1]};
  CHECK(train(rev, SegmenterConfig{}) == m);
}

TEST_CASE("prediction without smoothing is voxel-separable") {
  const auto h = grid(10, 10, 10);
  const AtlasPair a = random_atlas(41, h);
  const auto m = train(std::span(&a, 1), SegmenterConfig{.smoothing_weight = 0.0});
  const auto full = predict(m, a.image);

  const auto hc = grid(4, 5, 3);
  const std::size_t ox = 3, oy = 2, oz = 6;
  SegmenterModel cropped = m;
  cropped.prior = PartialVolumeSet(hc, 5);
  ScalarVolume img(hc);
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 4; ++x) {
        const std::size_t jc = hc.index(x, y, z), jf = h.index(x + ox, y + oy, z + oz);
        img.data[jc] = a.image.data[jf];
        for (int c = 0; c < 5; ++c) cropped.prior.at(c, jc) = m.prior.at(c, jf);
      }
  const auto part = predict(cropped, img);
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 4; ++x) {
        const std::size_t jc = hc.index(x, y, z), jf = h.index(x + ox, y + oy, z + oz);
        CHECK(part.labels.data[jc] == full.labels.data[jf]);
        for (int c = 0; c < 5; ++c) CHECK(part.posteriors.at(c, jc) == full.posteriors.at(c, jf));
      }
}

TEST_CASE("smoothing pass follows the neighbour vote") {
  // A lone voxel whose likelihood barely prefers class 1 inside a class-2 block flips to 2.
  const auto h = grid(3, 3, 3);
  SegmenterModel m;
  m.means = {10.0, 20.0};
  m.variances = {25.0, 25.0};
  m.prior = PartialVolumeSet(h, 2);
  for (std::size_t j = 0; j < h.num_voxels(); ++j) m.prior.at(0, j) = m.prior.at(1, j) = 0.5f;
  ScalarVolume img(h, 20.0f);
  const std::size_t centre = h.index(1, 1, 1);
  img.data[centre] = 14.9f;
  m.smoothing_weight = 0.0;
  CHECK(predict(m, img).labels.data[centre] == 1);
  m.smoothing_weight = 0.5;
  CHECK(predict(m, img).labels.data[centre] == 2);
}

TEST_CASE("self-consistency on a noiseless same-protocol phantom") {
  PhantomParams p;
  ProtocolParams a = default_protocol_a();
  a.noise_sigma = 0.0;
  std::vector<AtlasPair> atlases;
  for (int i = 0; i < 4; ++i) {
    const PhantomSubject s = make_subject(p, i, a, default_protocol_b());
    atlases.push_back({s.image_a, s.labels, std::nullopt});
  }
  const PhantomSubject test = make_subject(p, 10, a, default_protocol_b());
  const auto model = train(atlases, SegmenterConfig{});
  const auto out = predict(model, test.image_a);
  std::size_t in_mask = 0, agree = 0;
  for (std::size_t j = 0; j < test.labels.size(); ++j) {
    if (model.prior.is_background(j)) continue;
    ++in_mask;
    agree += out.labels.data[j] == test.labels.data[j];
  }
  const double rate = double(agree) / double(in_mask);
  MESSAGE("agreement " << rate << " over " << in_mask << " in-mask voxels");
  CHECK(rate >= 0.99);
}

TEST_CASE("warm_start") {
  const auto h = grid(6, 6, 6);
  const AtlasPair a = random_atlas(51, h), b = random_atlas(52, h);
  const auto m1 = train(std::span(&a, 1), SegmenterConfig{});
  const auto m2 = train(std::span(&b, 1), SegmenterConfig{});
  CHECK(warm_start(m1, m2) == m1);
  auto fewer = m2;
  fewer.means.pop_back();
  fewer.variances.pop_back();
  CHECK_THROWS_AS(warm_start(m1, fewer), ArgumentError);
}

TEST_CASE("serialization round trip") {
  const auto h = grid(7, 6, 5);
  std::vector<AtlasPair> atlases{random_atlas(61, h), random_atlas(62, h)};
  const auto m = train(atlases, SegmenterConfig{});
  std::stringstream buf;
  write_segmenter(buf, m);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "SEGM");
  CHECK(read_segmenter(buf) == m);

  std::stringstream bad(std::string("SEGX") + bytes.substr(4));
  CHECK_THROWS_AS(read_segmenter(bad), FormatError);
  std::stringstream cut(bytes.substr(0, 30));
  CHECK_THROWS_AS(read_segmenter(cut), FormatError);
  CHECK_THROWS_AS(read_segmenter(std::filesystem::path("/nonexistent/model.segm")), IoError);
}
