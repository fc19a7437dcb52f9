#pragma once

// Signed-distance fields: closed-form primitives and their compositions, dense
// vertex-centred grids with trilinear interpolation, and lattice sampling.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "physdf/core/error.hpp"
#include "physdf/core/vec.hpp"

namespace physdf {

struct Aabb {
  Vec3d min;
  Vec3d max;

  Vec3d extent() const { return max - min; }
  Vec3d center() const { return (min + max) * 0.5; }

  bool contains(const Vec3d& p) const {
    for (int d = 0; d < 3; ++d)
      if (!(p[d] >= min[d] && p[d] <= max[d])) return false;
    return true;
  }

  void validate() const {
    for (int d = 0; d < 3; ++d)
      if (!(min[d] < max[d]))
        throw Error("Aabb: min must be strictly below max on axis " + std::to_string(d));
  }

  friend bool operator==(const Aabb&, const Aabb&) = default;
};

/// Value and spatial gradient of a field at one point.
struct SdfQuery {
  double value = 0.0;
  Vec3d gradient;
};

/// Anything that can be queried like a signed-distance field.
template <class F>
concept SdfFieldLike = requires(const F& f, const Vec3d& p) {
  { f.query(p) } -> std::convertible_to<SdfQuery>;
};

// ---------------------------------------------------------------------------
// Analytic fields
// ---------------------------------------------------------------------------

/// Immutable expression tree of closed-form SDF primitives. Copies share nodes.
class AnalyticSdf {
 public:
  static AnalyticSdf sphere(const Vec3d& center, double radius) {
    return AnalyticSdf(std::make_shared<Node>(Node{Kind::kSphere, center, {}, radius, {}, {}}));
  }

  /// Points with dot(normal, p) > offset are outside (positive).
  static AnalyticSdf halfspace(const Vec3d& normal, double offset) {
    const double n = norm(normal);
    if (!(n > 0.0)) throw Error("AnalyticSdf::halfspace: normal must be nonzero");
    return AnalyticSdf(
        std::make_shared<Node>(Node{Kind::kHalfspace, normal / n, {}, offset / n, {}, {}}));
  }

  static AnalyticSdf box(const Vec3d& center, const Vec3d& half_extents) {
    for (int d = 0; d < 3; ++d)
      if (!(half_extents[d] > 0.0)) throw Error("AnalyticSdf::box: half extents must be positive");
    return AnalyticSdf(
        std::make_shared<Node>(Node{Kind::kBox, center, half_extents, 0.0, {}, {}}));
  }

  /// Pointwise minimum. Ties take the first child.
  static AnalyticSdf union_of(std::vector<AnalyticSdf> children) {
    if (children.empty()) throw Error("AnalyticSdf::union_of: needs at least one child");
    Node n{Kind::kUnion, {}, {}, 0.0, {}, {}};
    for (auto& c : children) n.children.push_back(c.node_);
    return AnalyticSdf(std::make_shared<Node>(std::move(n)));
  }

  /// child evaluated at rotation^T (p - translation).
  static AnalyticSdf transformed(const AnalyticSdf& child, const Mat3d& rotation,
                                 const Vec3d& translation) {
    Node n{Kind::kTransform, translation, {}, 0.0, rotation, {child.node_}};
    return AnalyticSdf(std::make_shared<Node>(std::move(n)));
  }

  /// factor * child(p). Not a distance for factor != 1; used to exercise
  /// gradient-norm regularizers.
  static AnalyticSdf scaled_value(const AnalyticSdf& child, double factor) {
    Node n{Kind::kScale, {}, {}, factor, {}, {child.node_}};
    return AnalyticSdf(std::make_shared<Node>(std::move(n)));
  }

  SdfQuery query(const Vec3d& p) const { return eval(*node_, p); }

 private:
  enum class Kind { kSphere, kHalfspace, kBox, kUnion, kTransform, kScale };

  struct Node {
    Kind kind;
    Vec3d a;       // centre, normal, or translation
    Vec3d b;       // half extents
    double s;      // radius, offset, or scale
    Mat3d rot;
    std::vector<std::shared_ptr<const Node>> children;
  };

  explicit AnalyticSdf(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  static SdfQuery eval(const Node& n, const Vec3d& p) {
    switch (n.kind) {
      case Kind::kSphere: {
        const Vec3d d = p - n.a;
        const double r = norm(d);
        // The centre is a medial point; pick +x so the gradient stays unit.
        const Vec3d g = r > 0.0 ? d / r : Vec3d{1.0, 0.0, 0.0};
        return {r - n.s, g};
      }
      case Kind::kHalfspace:
        return {dot(n.a, p) - n.s, n.a};
      case Kind::kBox: {
        const Vec3d d = p - n.a;
        Vec3d q, sgn;
        for (int i = 0; i < 3; ++i) {
          sgn[i] = d[i] < 0.0 ? -1.0 : 1.0;
          q[i] = std::abs(d[i]) - n.b[i];
        }
        const double qmax = std::max({q[0], q[1], q[2]});
        if (qmax > 0.0) {
          Vec3d outside;
          for (int i = 0; i < 3; ++i) outside[i] = std::max(q[i], 0.0);
          const double len = norm(outside);
          Vec3d g;
          for (int i = 0; i < 3; ++i) g[i] = sgn[i] * outside[i] / len;
          return {len, g};
        }
        int axis = 0;
        for (int i = 1; i < 3; ++i)
          if (q[i] > q[axis]) axis = i;
        Vec3d g{0.0, 0.0, 0.0};
        g[axis] = sgn[axis];
        return {qmax, g};
      }
      case Kind::kUnion: {
        SdfQuery best = eval(*n.children.front(), p);
        for (std::size_t i = 1; i < n.children.size(); ++i) {
          SdfQuery q = eval(*n.children[i], p);
          if (q.value < best.value) best = q;
        }
        return best;
      }
      case Kind::kTransform: {
        const Mat3d rt = n.rot.transposed();
        SdfQuery q = eval(*n.children.front(), rt * (p - n.a));
        q.gradient = n.rot * q.gradient;
        return q;
      }
      case Kind::kScale: {
        SdfQuery q = eval(*n.children.front(), p);
        return {n.s * q.value, q.gradient * n.s};
      }
    }
    throw Error("AnalyticSdf: unknown node kind");
  }

  std::shared_ptr<const Node> node_;
};

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

using Dims = std::array<std::size_t, 3>;

/// Location of a point inside a grid cell: lower corner index and the local
/// coordinates in [0, 1]^3.
struct CellCoord {
  std::array<std::size_t, 3> base{};
  Vec3d t;
};

/// Dense vertex-centred scalar grid. Values are stored with x varying fastest.
class SdfGrid {
 public:
  SdfGrid() = default;

  SdfGrid(Dims dims, Aabb bbox, std::vector<double> values, bool clamp_queries = false)
      : dims_(dims), bbox_(bbox), values_(std::move(values)), clamp_(clamp_queries) {
    bbox_.validate();
    for (int d = 0; d < 3; ++d)
      if (dims_[static_cast<std::size_t>(d)] < 2)
        throw Error("SdfGrid: dims must be >= 2 on every axis (axis " + std::to_string(d) + ")");
    if (values_.size() != dims_[0] * dims_[1] * dims_[2])
      throw Error("SdfGrid: value count does not match dims");
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (!std::isfinite(values_[i]))
        throw Error("SdfGrid: non-finite value at flat index " + std::to_string(i));
  }

  const Dims& dims() const { return dims_; }
  const Aabb& bbox() const { return bbox_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }
  bool clamps_queries() const { return clamp_; }
  void set_clamp_queries(bool on) { clamp_ = on; }

  std::size_t size() const { return values_.size(); }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return i + dims_[0] * (j + dims_[1] * k);
  }

  double at(std::size_t i, std::size_t j, std::size_t k) const { return values_[index(i, j, k)]; }

  Vec3d spacing() const {
    const Vec3d e = bbox_.extent();
    return {e[0] / double(dims_[0] - 1), e[1] / double(dims_[1] - 1), e[2] / double(dims_[2] - 1)};
  }

  Vec3d lattice_point(std::size_t i, std::size_t j, std::size_t k) const {
    const Vec3d h = spacing();
    return {bbox_.min[0] + double(i) * h[0], bbox_.min[1] + double(j) * h[1],
            bbox_.min[2] + double(k) * h[2]};
  }

  /// Cell holding p. A point on a shared face belongs to the lower-index cell.
  CellCoord locate(const Vec3d& p) const {
    if (!all_finite(p)) throw Error("SdfGrid: non-finite query point");
    if (!clamp_ && !bbox_.contains(p)) {
      std::ostringstream os;
      os << "SdfGrid: query point " << p << " outside grid bounds";
      throw Error(os.str());
    }
    const Vec3d h = spacing();
    CellCoord c;
    for (int d = 0; d < 3; ++d) {
      const auto ud = static_cast<std::size_t>(d);
      const double cells = double(dims_[ud] - 1);
      double u = (p[d] - bbox_.min[d]) / h[d];
      u = std::clamp(u, 0.0, cells);
      // Lattice points computed as min + i*h can land an ulp off integer.
      const double r = std::round(u);
      if (std::abs(u - r) <= 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, r)) u = r;
      double b = std::ceil(u) - 1.0;
      b = std::clamp(b, 0.0, cells - 1.0);
      c.base[ud] = static_cast<std::size_t>(b);
      c.t[d] = u - b;
    }
    return c;
  }

  /// The 8 corner flat indices of a cell with their trilinear weights and the
  /// spatial gradients of those weights.
  struct Stencil {
    std::array<std::size_t, 8> index{};
    std::array<double, 8> weight{};
    std::array<Vec3d, 8> weight_gradient{};
  };

  Stencil stencil(const Vec3d& p) const {
    const CellCoord c = locate(p);
    const Vec3d h = spacing();
    Stencil s;
    for (int corner = 0; corner < 8; ++corner) {
      const int bx = corner & 1, by = (corner >> 1) & 1, bz = (corner >> 2) & 1;
      const double wx = bx ? c.t[0] : 1.0 - c.t[0];
      const double wy = by ? c.t[1] : 1.0 - c.t[1];
      const double wz = bz ? c.t[2] : 1.0 - c.t[2];
      const double dx = (bx ? 1.0 : -1.0) / h[0];
      const double dy = (by ? 1.0 : -1.0) / h[1];
      const double dz = (bz ? 1.0 : -1.0) / h[2];
      const auto ci = static_cast<std::size_t>(corner);
      s.index[ci] = index(c.base[0] + std::size_t(bx), c.base[1] + std::size_t(by),
                          c.base[2] + std::size_t(bz));
      s.weight[ci] = wx * wy * wz;
      s.weight_gradient[ci] = {dx * wy * wz, wx * dy * wz, wx * wy * dz};
    }
    return s;
  }

  SdfQuery query(const Vec3d& p) const {
    const Stencil s = stencil(p);
    SdfQuery q;
    for (std::size_t c = 0; c < 8; ++c) {
      const double v = values_[s.index[c]];
      q.value += s.weight[c] * v;
      q.gradient += s.weight_gradient[c] * v;
    }
    return q;
  }

 private:
  Dims dims_{};
  Aabb bbox_{};
  std::vector<double> values_;
  bool clamp_ = false;
};

/// The field types the toolkit ships with.
using SdfField = std::variant<AnalyticSdf, SdfGrid>;

inline SdfQuery query(const SdfField& field, const Vec3d& p) {
  return std::visit([&](const auto& f) { return f.query(p); }, field);
}

template <SdfFieldLike F>
SdfQuery query(const F& field, const Vec3d& p) {
  return field.query(p);
}

/// Samples `field` at every lattice point of a dims-sized grid over `bbox`.
template <class F>
SdfGrid voxelize(const F& field, const Aabb& bbox, const Dims& dims) {
  bbox.validate();
  for (int d = 0; d < 3; ++d)
    if (dims[static_cast<std::size_t>(d)] < 2)
      throw Error("voxelize: dims must be >= 2 on every axis (axis " + std::to_string(d) + " has " +
                  std::to_string(dims[static_cast<std::size_t>(d)]) + ")");
  const Vec3d e = bbox.extent();
  const Vec3d h{e[0] / double(dims[0] - 1), e[1] / double(dims[1] - 1), e[2] / double(dims[2] - 1)};
  std::vector<double> values(dims[0] * dims[1] * dims[2]);
  std::size_t n = 0;
  for (std::size_t k = 0; k < dims[2]; ++k)
    for (std::size_t j = 0; j < dims[1]; ++j)
      for (std::size_t i = 0; i < dims[0]; ++i) {
        const Vec3d p{bbox.min[0] + double(i) * h[0], bbox.min[1] + double(j) * h[1],
                      bbox.min[2] + double(k) * h[2]};
        const double v = query(field, p).value;
        if (!std::isfinite(v))
          throw Error("voxelize: non-finite field value at lattice index (" + std::to_string(i) +
                      ", " + std::to_string(j) + ", " + std::to_string(k) + ")");
        values[n++] = v;
      }
  return SdfGrid(dims, bbox, std::move(values));
}

/// Bounding box of `points` inflated by `delta` on every face.
inline Aabb expand_boundary(const std::vector<Vec3d>& points, double delta = 0.1) {
  if (points.empty()) throw Error("expand_boundary: empty point set");
  if (!(delta > 0.0)) throw Error("expand_boundary: delta must be positive");
  Aabb box{points.front(), points.front()};
  for (const auto& p : points)
    for (int d = 0; d < 3; ++d) {
      box.min[d] = std::min(box.min[d], p[d]);
      box.max[d] = std::max(box.max[d], p[d]);
    }
  for (int d = 0; d < 3; ++d) {
    box.min[d] -= delta;
    box.max[d] += delta;
  }
  return box;
}

}  // namespace physdf
