// Slow reference implementations used as test oracles. Each one follows its
// definition literally and shares no code with the library.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "camelion/random.hpp"
#include "camelion/volume.hpp"

namespace oracle {

struct GridMin {
  double alpha = 0.0;
  double objective = 0.0;
};

inline double objective(double a, double f, double ca, double cb, double sigma, double beta) {
  const double r = f - a * ca - (1.0 - a) * cb;
  return r * r / (2.0 * sigma * sigma) - 2.0 * beta * (a - 0.5) * (a - 0.5);
}

// Exhaustive search over alpha = 0, step, 2 step, ..., 1 (ties to the larger alpha).
inline GridMin grid_alpha(double f, double ca, double cb, double sigma, double beta, double step = 1e-4) {
  const auto n = static_cast<long>(std::llround(1.0 / step));
  GridMin best{0.0, std::numeric_limits<double>::infinity()};
  for (long i = 0; i <= n; ++i) {
    const double a = static_cast<double>(i) / static_cast<double>(n);
    const double j = objective(a, f, ca, cb, sigma, beta);
    if (j <= best.objective) best = {a, j};
  }
  return best;
}

// Nearest tissue voxel with a different label by all-pairs scan.
inline camelion::LabelVolume brute_second_class(const camelion::LabelVolume& labels) {
  const auto& h = labels.header;
  camelion::LabelVolume out(h, labels.num_classes);
  const std::size_t nx = h.dims[0], ny = h.dims[1], nz = h.dims[2];
  for (std::size_t z = 0; z < nz; ++z)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        const std::size_t j = h.index(x, y, z);
        const int own = labels.data[j];
        if (own == 0) continue;
        double best = std::numeric_limits<double>::infinity();
        int best_label = 0;
        for (std::size_t z2 = 0; z2 < nz; ++z2)
          for (std::size_t y2 = 0; y2 < ny; ++y2)
            for (std::size_t x2 = 0; x2 < nx; ++x2) {
              const int other = labels.data[h.index(x2, y2, z2)];
              if (other == 0 || other == own) continue;
              const double dx = (double(x2) - double(x)) * h.voxel_size[0];
              const double dy = (double(y2) - double(y)) * h.voxel_size[1];
              const double dz = (double(z2) - double(z)) * h.voxel_size[2];
              const double d = dx * dx + dy * dy + dz * dz;
              if (d < best || (d == best && other < best_label)) {
                best = d;
                best_label = other;
              }
            }
        out.data[j] = static_cast<std::uint8_t>(best_label);
      }
  return out;
}

inline camelion::LabelVolume random_labels(std::uint64_t seed, std::array<std::uint32_t, 3> dims, int k,
                                           double background_fraction) {
  camelion::VolumeHeader h;
  h.dims = dims;
  camelion::LabelVolume out(h, k);
  camelion::SplitMix rng(seed);
  for (auto& v : out.data)
    v = rng.uniform() < background_fraction ? 0 : static_cast<std::uint8_t>(1 + rng.below(static_cast<std::uint64_t>(k)));
  return out;
}

}  // namespace oracle
