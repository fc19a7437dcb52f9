#pragma once

// Physical uncertainty: a dense nonnegative grid that grows along the paths of
// contact particles, and pixel sampling proportional to rendered uncertainty.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "physdf/core/error.hpp"
#include "physdf/core/vec.hpp"
#include "physdf/rigid_body.hpp"
#include "physdf/sdf_field.hpp"

namespace physdf {

class UncertaintyGrid {
 public:
  UncertaintyGrid(Dims dims, Aabb bbox)
      : grid_(dims, bbox, std::vector<double>(dims[0] * dims[1] * dims[2], 0.0), true) {}

  /// Wraps existing values (e.g. loaded from disk). All must be finite and >= 0.
  UncertaintyGrid(Dims dims, Aabb bbox, std::vector<double> values)
      : grid_(dims, bbox, std::move(values), true) {
    for (double v : grid_.values())
      if (v < 0.0) throw Error("UncertaintyGrid: values must be nonnegative");
  }

  const Dims& dims() const { return grid_.dims(); }
  const Aabb& bbox() const { return grid_.bbox(); }
  const std::vector<double>& values() const { return grid_.values(); }
  const SdfGrid& grid() const { return grid_; }

  /// Trilinear interpolation; points outside the box are clamped onto it.
  double query(const Vec3d& p) const { return grid_.query(p).value; }

  /// Adds `amount` spread over the 8 nodes around p by trilinear weight.
  void splat(const Vec3d& p, double amount) {
    const SdfGrid::Stencil s = grid_.stencil(p);
    auto& v = grid_.mutable_values();
    for (std::size_t c = 0; c < 8; ++c) v[s.index[c]] = std::max(0.0, v[s.index[c]] + amount * s.weight[c]);
  }

 private:
  SdfGrid grid_;
};

inline double query_uncertainty(const UncertaintyGrid& grid, const Vec3d& p) { return grid.query(p); }

/// Points spaced evenly on [p0, p'] (both ends included) for every contacted record.
template <class T>
std::vector<Vec3d> uncertain_points(const std::vector<ContactRecord<T>>& records,
                                    int samples_per_record = 8) {
  if (samples_per_record < 2) throw Error("uncertain_points: samples_per_record must be >= 2");
  std::vector<Vec3d> out;
  for (const auto& r : records) {
    if (!r.contacted) continue;
    const Vec3d a = values(r.p0);
    const Vec3d b = values(r.p_first);
    for (int k = 0; k < samples_per_record; ++k)
      out.push_back(a + (b - a) * (double(k) / double(samples_per_record - 1)));
  }
  return out;
}

/// One descent step on -xi * sum_p u(p): every node gains
/// step_size * xi * (its trilinear weight) per point.
inline UncertaintyGrid update_uncertainty(UncertaintyGrid grid, const std::vector<Vec3d>& points,
                                          double xi = 100.0, double step_size = 0.01) {
  if (!(xi > 0.0)) throw Error("update_uncertainty: xi must be positive");
  if (!(step_size > 0.0)) throw Error("update_uncertainty: step_size must be positive");
  for (const auto& p : points) grid.splat(p, step_size * xi);
  return grid;
}

/// U(r) / sum U, or uniform when the total is zero.
inline std::vector<double> sampling_probabilities(const std::vector<double>& u_image) {
  if (u_image.empty()) throw Error("sampling_probabilities: empty image");
  double total = 0.0;
  for (std::size_t i = 0; i < u_image.size(); ++i) {
    if (!(u_image[i] >= 0.0) || !std::isfinite(u_image[i]))
      throw Error("sampling_probabilities: pixel " + std::to_string(i) +
                  " is negative or non-finite");
    total += u_image[i];
  }
  std::vector<double> p(u_image.size());
  if (total == 0.0) {
    std::fill(p.begin(), p.end(), 1.0 / double(u_image.size()));
  } else {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = u_image[i] / total;
  }
  return p;
}

/// Uniform double in [0, 1) from the top 53 bits of one generator draw. Spelled
/// out so the stream is identical across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

/// `guided_count` draws from `probs` (with replacement) followed by
/// `random_count` uniform draws, all from one generator seeded with `seed`.
inline std::vector<std::size_t> sample_pixels(const std::vector<double>& probs,
                                              int guided_count = 768, int random_count = 256,
                                              std::uint64_t seed = 0) {
  if (probs.empty()) throw Error("sample_pixels: empty distribution");
  if (guided_count < 0 || random_count < 0) throw Error("sample_pixels: counts must be >= 0");
  std::vector<double> cdf(probs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0)) throw Error("sample_pixels: negative probability");
    acc += probs[i];
    cdf[i] = acc;
  }
  if (!(acc > 0.0)) throw Error("sample_pixels: probabilities sum to zero");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  out.reserve(std::size_t(guided_count + random_count));
  for (int k = 0; k < guided_count; ++k) {
    const double u = unit_uniform(rng) * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t idx = it == cdf.end() ? cdf.size() - 1 : std::size_t(it - cdf.begin());
    out.push_back(idx);
  }
  const double n = double(probs.size());
  for (int k = 0; k < random_count; ++k)
    out.push_back(std::min(probs.size() - 1, std::size_t(unit_uniform(rng) * n)));
  return out;
}

}  // namespace physdf
