#pragma once

// Surface-point extraction from a signed-distance grid: zero-crossing edges are
// found by comparing the grid with a copy shifted one vertex along each axis,
// crossings are placed by linear interpolation, and the coarse points are
// pulled onto the continuous surface with one projection step p - f(p) grad f(p).

#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <vector>

#include "physdf/core/error.hpp"
#include "physdf/core/vec.hpp"
#include "physdf/sdf_field.hpp"

namespace physdf {

/// Grid edge (or vertex) that produced a surface point.
struct EdgeProvenance {
  int axis = 0;                          // 0 = x, 1 = y, 2 = z
  std::array<std::size_t, 3> lattice{};  // lower vertex of the edge, or the vertex itself
  bool on_vertex = false;                // emitted because the vertex value is exactly zero

  friend bool operator==(const EdgeProvenance&, const EdgeProvenance&) = default;
};

struct SurfacePointCloud {
  std::vector<Vec3d> points;
  std::vector<Vec3d> normals;  // empty, or one unit normal per point
  std::vector<EdgeProvenance> provenance;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty() && normals.size() == points.size(); }

  void append(const SurfacePointCloud& other) {
    points.insert(points.end(), other.points.begin(), other.points.end());
    normals.insert(normals.end(), other.normals.begin(), other.normals.end());
    provenance.insert(provenance.end(), other.provenance.begin(), other.provenance.end());
  }
};

namespace detail {

// Appends the crossings along `axis`. `emitted` tracks zero vertices already
// produced so that each is reported once.
inline void shift_interpolate_into(const SdfGrid& grid, int axis, std::vector<char>& emitted,
                                   SurfacePointCloud& out) {
  if (axis < 0 || axis > 2) throw Error("shift_interpolate: axis must be 0, 1 or 2");
  const Dims& n = grid.dims();
  const std::array<std::size_t, 3> step{axis == 0 ? 1u : 0u, axis == 1 ? 1u : 0u,
                                        axis == 2 ? 1u : 0u};
  const auto& s = grid.values();

  auto emit_vertex = [&](std::size_t i, std::size_t j, std::size_t k) {
    const std::size_t flat = grid.index(i, j, k);
    if (emitted[flat]) return;
    emitted[flat] = 1;
    out.points.push_back(grid.lattice_point(i, j, k));
    out.provenance.push_back({axis, {i, j, k}, true});
  };

  for (std::size_t k = 0; k + step[2] < n[2]; ++k)
    for (std::size_t j = 0; j + step[1] < n[1]; ++j)
      for (std::size_t i = 0; i + step[0] < n[0]; ++i) {
        const double a = s[grid.index(i, j, k)];
        const double b = s[grid.index(i + step[0], j + step[1], k + step[2])];
        if (a * b < 0.0) {
          const Vec3d p = grid.lattice_point(i, j, k);
          const Vec3d q = grid.lattice_point(i + step[0], j + step[1], k + step[2]);
          out.points.push_back(p + (q - p) * (a / (a - b)));
          out.provenance.push_back({axis, {i, j, k}, false});
        } else if (a == 0.0 && b != 0.0) {
          emit_vertex(i, j, k);
        } else if (b == 0.0 && a != 0.0) {
          emit_vertex(i + step[0], j + step[1], k + step[2]);
        }
      }
}

}  // namespace detail

/// Coarse surface points on the lattice edges along one axis whose endpoint
/// values change sign.
inline SurfacePointCloud shift_interpolate(const SdfGrid& grid, int axis) {
  std::vector<char> emitted(grid.size(), 0);
  SurfacePointCloud out;
  detail::shift_interpolate_into(grid, axis, emitted, out);
  return out;
}

/// Crossings along x, then y, then z. Zero vertices appear once.
inline SurfacePointCloud extract_coarse(const SdfGrid& grid) {
  std::vector<char> emitted(grid.size(), 0);
  SurfacePointCloud out;
  for (int axis = 0; axis < 3; ++axis) detail::shift_interpolate_into(grid, axis, emitted, out);
  return out;
}

/// Moves every point by -f(p) grad f(p), `iterations` times. The gradient is
/// used as returned by the field, without normalization.
template <class F>
SurfacePointCloud refine(const SurfacePointCloud& points, const F& field, int iterations = 1) {
  if (iterations < 1) throw Error("refine: iterations must be >= 1");
  SurfacePointCloud out = points;
  out.normals.clear();
  for (auto& p : out.points) {
    for (int it = 0; it < iterations; ++it) {
      const SdfQuery q = query(field, p);
      const Vec3d next = p - q.gradient * q.value;
      if (!std::isfinite(q.value) || !all_finite(next)) {
        std::ostringstream os;
        os << "refine: non-finite field query at point " << p;
        throw Error(os.str());
      }
      p = next;
    }
  }
  return out;
}

/// Unit normals from the field gradient at each point.
template <class F>
void attach_normals(SurfacePointCloud& cloud, const F& field) {
  cloud.normals.clear();
  cloud.normals.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    const Vec3d g = query(field, p).gradient;
    const double len = norm(g);
    if (!(len > 0.0) || !std::isfinite(len)) {
      std::ostringstream os;
      os << "attach_normals: degenerate gradient at point " << p;
      throw Error(os.str());
    }
    cloud.normals.push_back(g / len);
  }
}

/// Full pipeline: voxelize, coarse extraction, one refinement step, normals.
template <class F>
SurfacePointCloud extract_surface_points(const F& field, const Aabb& bbox, const Dims& dims,
                                         int iterations = 1) {
  const SdfGrid grid = voxelize(field, bbox, dims);
  SurfacePointCloud fine = refine(extract_coarse(grid), field, iterations);
  attach_normals(fine, field);
  return fine;
}

/// Grid-only pipeline; refinement and normals use the trilinear interpolant.
/// Queries are clamped to the grid box since refined points may step outside.
inline SurfacePointCloud extract_surface_points(const SdfGrid& grid, int iterations = 1) {
  SdfGrid clamped = grid;
  clamped.set_clamp_queries(true);
  SurfacePointCloud fine = refine(extract_coarse(grid), clamped, iterations);
  attach_normals(fine, clamped);
  return fine;
}

}  // namespace physdf
