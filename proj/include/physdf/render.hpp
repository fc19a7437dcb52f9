#pragma once

// Volume rendering of a compositional SDF scene. Object 0 is the background;
// the scene SDF is the pointwise minimum over objects.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "physdf/core/error.hpp"
#include "physdf/core/vec.hpp"
#include "physdf/sdf_field.hpp"
#include "physdf/uncertainty.hpp"

namespace physdf {

struct SampleAppearance {
  Vec3d color;
  double u_depth = 0.0;
  double u_normal = 0.0;
};

/// Colour and rendering uncertainties at a sample from its position, unit
/// normal and viewing direction.
using AppearanceFn = std::function<SampleAppearance(const Vec3d& p, const Vec3d& n, const Vec3d& v)>;

/// Normal-coloured shading with constant uncertainties.
inline SampleAppearance normal_shading(const Vec3d&, const Vec3d& n, const Vec3d&) {
  return {{0.5 * (n[0] + 1.0), 0.5 * (n[1] + 1.0), 0.5 * (n[2] + 1.0)}, 1.0, 1.0};
}

struct SceneModel {
  std::vector<SdfField> objects;  // objects[0] is the background
  AppearanceFn appearance = normal_shading;
  double sharpness = 50.0;        // u in Phi_u
  double semantic_gamma = 20.0;   // gamma in the instance logits

  void validate() const {
    if (objects.empty()) throw Error("SceneModel: at least one object is required");
    if (!(sharpness > 0.0)) throw Error("SceneModel: sharpness must be positive");
    if (!(semantic_gamma > 0.0)) throw Error("SceneModel: semantic_gamma must be positive");
    if (!appearance) throw Error("SceneModel: appearance function is empty");
  }
};

struct SceneSample {
  double value = 0.0;
  std::size_t object = 0;
};

/// Minimum object SDF at p and the object attaining it (lowest index on ties).
inline SceneSample scene_sdf(const SceneModel& scene, const Vec3d& p) {
  if (scene.objects.empty()) throw Error("scene_sdf: scene has no objects");
  SceneSample best{query(scene.objects[0], p).value, 0};
  for (std::size_t j = 1; j < scene.objects.size(); ++j) {
    const double v = query(scene.objects[j], p).value;
    if (v < best.value) best = {v, j};
  }
  return best;
}

struct Ray {
  Vec3d origin;
  Vec3d direction;
  std::vector<double> t;

  Vec3d at(double depth) const { return origin + direction * depth; }

  void validate() const {
    if (t.size() < 2) throw Error("Ray: at least two samples are required");
    for (std::size_t i = 1; i < t.size(); ++i)
      if (!(t[i] > t[i - 1])) throw Error("Ray: sample depths must be strictly increasing");
    if (std::abs(norm(direction) - 1.0) > 1e-9) throw Error("Ray: direction must be unit length");
  }
};

/// Ray with `n` evenly spaced depths on [near, far].
inline Ray make_ray(const Vec3d& origin, const Vec3d& direction, double near, double far,
                    std::size_t n) {
  if (n < 2 || !(far > near)) throw Error("make_ray: need n >= 2 and far > near");
  Ray r{origin, direction / norm(direction), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i)
    r.t[i] = near + (far - near) * double(i) / double(n - 1);
  return r;
}

/// log Phi_u(x) = -log(1 + exp(-u x)), evaluated without overflow.
inline double log_sigmoid(double ux) {
  return ux >= 0.0 ? -std::log1p(std::exp(-ux)) : ux - std::log1p(std::exp(ux));
}

inline double sigmoid(double x, double u) { return std::exp(log_sigmoid(u * x)); }

struct RayWeights {
  std::vector<double> alpha;
  std::vector<double> transmittance;
  std::vector<double> weight;
};

/// Discrete opacity, transmittance and weights from SDF samples along a ray.
inline RayWeights weights(const std::vector<double>& s, double u) {
  if (s.size() < 2) throw Error("weights: at least two samples are required");
  if (!(u > 0.0)) throw Error("weights: sharpness must be positive");
  const std::size_t n = s.size();
  RayWeights w{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i + 1 < n; ++i) {
    // (Phi(s_i) - Phi(s_i+1)) / Phi(s_i) = 1 - Phi(s_i+1) / Phi(s_i)
    const double ratio = std::exp(log_sigmoid(u * s[i + 1]) - log_sigmoid(u * s[i]));
    w.alpha[i] = std::max(1.0 - ratio, 0.0);
  }
  double T = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    w.transmittance[i] = T;
    w.weight[i] = T * w.alpha[i];
    T *= 1.0 - w.alpha[i];
  }
  return w;
}

/// Instance logit gamma / (1 + exp(gamma s)).
inline double instance_logit(double s, double gamma) {
  const double e = gamma * s;
  if (e > 700.0) return 0.0;
  return gamma / (1.0 + std::exp(e));
}

struct RayOutputs {
  Vec3d color;
  double depth = 0.0;
  Vec3d normal;
  std::vector<double> logits;
  double u_depth = 0.0;
  double u_normal = 0.0;
  double u_physical = 0.0;
  RayWeights weights;

  /// Object with the largest rendered logit (lowest index on ties).
  std::size_t semantic_class() const {
    return std::size_t(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
};

/// Renders one ray. `u_phy` may be null, in which case the physical
/// uncertainty output is 0.
inline RayOutputs render_ray(const SceneModel& scene, const Ray& ray,
                             const UncertaintyGrid* u_phy = nullptr) {
  scene.validate();
  ray.validate();
  const std::size_t n = ray.t.size();
  const std::size_t k = scene.objects.size();
  std::vector<double> s(n);
  std::vector<std::vector<double>> sj(n, std::vector<double>(k));
  std::vector<Vec3d> normals(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3d p = ray.at(ray.t[i]);
    SdfQuery best;
    for (std::size_t j = 0; j < k; ++j) {
      const SdfQuery q = query(scene.objects[j], p);
      sj[i][j] = q.value;
      if (j == 0 || q.value < best.value) best = q;
    }
    s[i] = best.value;
    const double len = norm(best.gradient);
    normals[i] = len > 0.0 ? best.gradient / len : Vec3d{};
  }

  RayOutputs out;
  out.weights = weights(s, scene.sharpness);
  out.logits.assign(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = out.weights.weight[i];
    const Vec3d p = ray.at(ray.t[i]);
    const SampleAppearance a = scene.appearance(p, normals[i], ray.direction);
    out.color += a.color * w;
    out.depth += ray.t[i] * w;
    out.normal += normals[i] * w;
    out.u_depth += a.u_depth * w;
    out.u_normal += a.u_normal * w;
    if (u_phy) out.u_physical += u_phy->query(p) * w;
    for (std::size_t j = 0; j < k; ++j)
      out.logits[j] += instance_logit(sj[i][j], scene.semantic_gamma) * w;
  }
  return out;
}

/// Reversed sample depths t_hat_i = (t_0 + t_{n-1}) - t_{n-1-i}.
inline std::vector<double> reversed_depths(const std::vector<double>& t) {
  const std::size_t n = t.size();
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = (t.front() + t.back()) - t[n - 1 - i];
  return r;
}

/// Depth of a single field rendered along the reversed ray: SDF samples are
/// taken in reverse order and weighted against the reversed depths.
inline double render_reversed_depth(const SdfField& field, const Ray& ray, double u) {
  ray.validate();
  const std::size_t n = ray.t.size();
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = query(field, ray.at(ray.t[n - 1 - i])).value;
  const RayWeights w = weights(s, u);
  const std::vector<double> th = reversed_depths(ray.t);
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) d += w.weight[i] * th[i];
  return d;
}

}  // namespace physdf
