#pragma once

// Reconstruction, regularization and uncertainty-weighted losses.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "physdf/core/error.hpp"
#include "physdf/core/vec.hpp"
#include "physdf/render.hpp"

namespace physdf {

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

/// Per-ray loss values and their mean.
struct PerRayLoss {
  std::vector<double> per_ray;
  double mean = 0.0;
};

inline PerRayLoss make_per_ray(std::vector<double> v) {
  PerRayLoss r;
  r.mean = physdf::mean(v);
  r.per_ray = std::move(v);
  return r;
}

namespace detail {
inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw Error(std::string(what) + ": input lengths differ");
}
}  // namespace detail

/// ||C_hat - C||_1 per ray.
inline PerRayLoss loss_rgb(const std::vector<Vec3d>& rendered, const std::vector<Vec3d>& target) {
  detail::require_same_size(rendered.size(), target.size(), "loss_rgb");
  std::vector<double> v;
  v.reserve(rendered.size());
  for (std::size_t i = 0; i < rendered.size(); ++i) v.push_back(norm1(rendered[i] - target[i]));
  return make_per_ray(std::move(v));
}

/// Least-squares scale w and shift q minimising sum (w D_hat + q - D_bar)^2.
inline std::pair<double, double> depth_scale_shift(const std::vector<double>& rendered,
                                                   const std::vector<double>& prior) {
  detail::require_same_size(rendered.size(), prior.size(), "depth_scale_shift");
  if (rendered.size() < 2) throw Error("depth_scale_shift: at least two rays are required");
  double a00 = 0.0, a01 = 0.0, b0 = 0.0, b1 = 0.0;
  const double a11 = double(rendered.size());
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    a00 += rendered[i] * rendered[i];
    a01 += rendered[i];
    b0 += rendered[i] * prior[i];
    b1 += prior[i];
  }
  const double det = a00 * a11 - a01 * a01;
  if (!(std::abs(det) > 1e-12 * a00 * a11))
    throw Error("depth_scale_shift: degenerate system (rendered depths are all equal)");
  return {(a11 * b0 - a01 * b1) / det, (a00 * b1 - a01 * b0) / det};
}

/// (w D_hat + q - D_bar)^2 per ray after the scale-shift solve.
inline PerRayLoss loss_depth(const std::vector<double>& rendered, const std::vector<double>& prior) {
  const auto [w, q] = depth_scale_shift(rendered, prior);
  std::vector<double> v;
  v.reserve(rendered.size());
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const double r = w * rendered[i] + q - prior[i];
    v.push_back(r * r);
  }
  return make_per_ray(std::move(v));
}

/// ||N_hat - N_bar||_1 + |1 - N_hat . N_bar| per ray.
inline PerRayLoss loss_normal(const std::vector<Vec3d>& rendered, const std::vector<Vec3d>& prior) {
  detail::require_same_size(rendered.size(), prior.size(), "loss_normal");
  std::vector<double> v;
  v.reserve(rendered.size());
  for (std::size_t i = 0; i < rendered.size(); ++i)
    v.push_back(norm1(rendered[i] - prior[i]) + std::abs(1.0 - dot(rendered[i], prior[i])));
  return make_per_ray(std::move(v));
}

inline constexpr double kUncertaintyFloor = 1e-6;

/// ln(|U| + 1) + L / |U| with |U| floored at 1e-6.
inline double uncertainty_weighted(double loss, double u) {
  const double a = std::max(std::abs(u), kUncertaintyFloor);
  return std::log(a + 1.0) + loss / a;
}

inline PerRayLoss loss_depth_u(const std::vector<double>& depth_loss,
                               const std::vector<double>& u_depth) {
  detail::require_same_size(depth_loss.size(), u_depth.size(), "loss_depth_u");
  std::vector<double> v;
  v.reserve(depth_loss.size());
  for (std::size_t i = 0; i < depth_loss.size(); ++i) {
    if (!std::isfinite(u_depth[i])) throw Error("loss_depth_u: non-finite uncertainty");
    v.push_back(uncertainty_weighted(depth_loss[i], u_depth[i]));
  }
  return make_per_ray(std::move(v));
}

inline PerRayLoss loss_normal_u(const std::vector<double>& normal_loss,
                                const std::vector<double>& u_normal) {
  detail::require_same_size(normal_loss.size(), u_normal.size(), "loss_normal_u");
  std::vector<double> v;
  v.reserve(normal_loss.size());
  for (std::size_t i = 0; i < normal_loss.size(); ++i) {
    if (!std::isfinite(u_normal[i])) throw Error("loss_normal_u: non-finite uncertainty");
    v.push_back(uncertainty_weighted(normal_loss[i], u_normal[i]));
  }
  return make_per_ray(std::move(v));
}

/// L / (U_phy + 1). U_phy is a constant here; nothing flows back into it.
inline PerRayLoss reweight_physical(const std::vector<double>& loss,
                                    const std::vector<double>& u_phy) {
  detail::require_same_size(loss.size(), u_phy.size(), "reweight_physical");
  std::vector<double> v;
  v.reserve(loss.size());
  for (std::size_t i = 0; i < loss.size(); ++i) {
    if (!(u_phy[i] >= 0.0)) throw Error("reweight_physical: physical uncertainty must be >= 0");
    v.push_back(loss[i] / (u_phy[i] + 1.0));
  }
  return make_per_ray(std::move(v));
}

inline constexpr double kLogFloor = 1e-12;

/// Cross-entropy of sum-normalised rendered logits against a one-hot target.
inline double loss_semantic(const std::vector<double>& logits, const std::vector<double>& target) {
  detail::require_same_size(logits.size(), target.size(), "loss_semantic");
  int ones = 0;
  for (double h : target) {
    if (h == 1.0)
      ++ones;
    else if (h != 0.0)
      throw Error("loss_semantic: target must be one-hot");
  }
  if (ones != 1) throw Error("loss_semantic: target must be one-hot");
  double total = 0.0;
  for (double h : logits) total += h;
  total = std::max(total, kLogFloor);
  double loss = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j)
    if (target[j] == 1.0) loss -= std::log(std::max(logits[j] / total, kLogFloor));
  return loss;
}

inline double loss_semantic(const std::vector<double>& logits, std::size_t target_class) {
  if (target_class >= logits.size()) throw Error("loss_semantic: class index out of range");
  std::vector<double> onehot(logits.size(), 0.0);
  onehot[target_class] = 1.0;
  return loss_semantic(logits, onehot);
}

/// Mean of (||grad s(p)|| - 1)^2 over the points, using the gradient of the
/// object attaining the scene minimum.
inline double loss_eikonal(const SceneModel& scene, const std::vector<Vec3d>& points) {
  if (points.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& p : points) {
    const SceneSample s = scene_sdf(scene, p);
    const double g = norm(query(scene.objects[s.object], p).gradient);
    acc += (g - 1.0) * (g - 1.0);
  }
  return acc / double(points.size());
}

/// Row-major P x P image.
template <class T>
struct Patch {
  std::size_t size = 0;
  std::vector<T> data;

  const T& operator()(std::size_t m, std::size_t n) const { return data[m * size + n]; }
};

namespace detail {
inline double absdiff(double a, double b) { return std::abs(a - b); }
inline double absdiff(const Vec3d& a, const Vec3d& b) { return norm1(a - b); }

template <class T>
double smoothness_sum(const Patch<T>& img, const Patch<double>& mask, int max_scale) {
  double total = 0.0;
  for (int d = 0; d <= max_scale; ++d) {
    const std::size_t s = std::size_t(1) << d;
    const std::size_t last = img.size - 1 - s;
    for (std::size_t m = 0; m <= last; ++m)
      for (std::size_t n = 0; n <= last; ++n)
        total += mask(m, n) * (absdiff(img(m, n), img(m, n + s)) + absdiff(img(m, n), img(m + s, n)));
  }
  return total;
}
}  // namespace detail

/// Multi-scale masked smoothness of background depth and normals over a square
/// patch, with strides 1, 2, ..., 2^max_scale. Index ranges run over
/// m, n = 0 .. P-1-2^d for each stride.
inline double loss_background_smoothness(const Patch<double>& depth, const Patch<Vec3d>& normal,
                                         const Patch<double>& mask, int max_scale = 3) {
  const std::size_t P = depth.size;
  if (normal.size != P || mask.size != P)
    throw Error("loss_background_smoothness: patches must share one size");
  if (depth.data.size() != P * P || normal.data.size() != P * P || mask.data.size() != P * P)
    throw Error("loss_background_smoothness: patch data does not match its size");
  if (max_scale < 0) throw Error("loss_background_smoothness: max_scale must be >= 0");
  if (P <= (std::size_t(1) << max_scale))
    throw Error("loss_background_smoothness: patch size must exceed the largest stride " +
                std::to_string(std::size_t(1) << max_scale));
  return detail::smoothness_sum(depth, mask, max_scale) +
         detail::smoothness_sum(normal, mask, max_scale);
}

/// Foreground mask: 1 where the rendered semantic class is not the background.
inline Patch<double> foreground_mask(const std::vector<RayOutputs>& renders, std::size_t P) {
  if (renders.size() != P * P) throw Error("foreground_mask: expected P*P renders");
  Patch<double> m{P, std::vector<double>(P * P)};
  for (std::size_t i = 0; i < renders.size(); ++i) m.data[i] = renders[i].semantic_class() != 0 ? 1.0 : 0.0;
  return m;
}

/// Depth where the background SDF first crosses zero along the ray, by
/// bisection on the first sign-change interval. Returns NaN when there is none.
inline double background_crossing(const SceneModel& scene, const Ray& ray, double tol = 1e-6) {
  const auto s_at = [&](double t) { return query(scene.objects.at(0), ray.at(t)).value; };
  for (std::size_t i = 0; i + 1 < ray.t.size(); ++i) {
    double lo = ray.t[i], hi = ray.t[i + 1];
    double slo = s_at(lo), shi = s_at(hi);
    if (slo == 0.0) return lo;
    if (slo * shi > 0.0) continue;
    if (shi == 0.0) return hi;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double sm = s_at(mid);
      if (std::abs(sm) < tol) return mid;
      if ((sm < 0.0) == (slo < 0.0)) {
        lo = mid;
        slo = sm;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

/// Mean of max(0, eps - s_j(p(t_i))) over foreground objects j and samples
/// behind the background surface (t_i > t'). 0 when the background is never
/// crossed or there are no such pairs.
inline double loss_object_point_sdf(const SceneModel& scene, const Ray& ray, double margin = 0.05) {
  scene.validate();
  ray.validate();
  const double t_cross = background_crossing(scene, ray);
  if (std::isnan(t_cross)) return 0.0;
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 1; j < scene.objects.size(); ++j)
    for (double t : ray.t) {
      if (!(t > t_cross)) continue;
      acc += std::max(0.0, margin - query(scene.objects[j], ray.at(t)).value);
      ++count;
    }
  return count == 0 ? 0.0 : acc / double(count);
}

inline double loss_reversed_depth(double background_depth, double object_depth) {
  return std::max(0.0, background_depth - object_depth);
}

/// Reversed-depth loss for one ray: the object is the rendered semantic class;
/// rays whose class is the background contribute 0.
inline double loss_reversed_depth(const SceneModel& scene, const Ray& ray) {
  const RayOutputs r = render_ray(scene, ray);
  const std::size_t obj = r.semantic_class();
  if (obj == 0) return 0.0;
  const double d_b = render_reversed_depth(scene.objects[0], ray, scene.sharpness);
  const double d_o = render_reversed_depth(scene.objects[obj], ray, scene.sharpness);
  return loss_reversed_depth(d_b, d_o);
}

struct LossWeights {
  double rgb = 1.0;
  double depth = 0.1;
  double normal = 0.05;
  double semantic = 0.04;
  double eikonal = 0.05;
  double background_smoothness = 0.1;
  double object_point_sdf = 0.1;
  double reversed_depth = 0.1;
  double physical = 60.0;
  double physical_uncertainty = 1.0;
};

/// Physical loss weight: 60 at epoch 0, raised by 30 per epoch.
inline double physical_weight(int epoch, double initial = 60.0, double increment = 30.0) {
  return initial + increment * double(std::max(epoch, 0));
}

struct LossTerms {
  double rgb = 0.0;
  double depth = 0.0;
  double normal = 0.0;
  double semantic = 0.0;
  double eikonal = 0.0;
  double background_smoothness = 0.0;
  double object_point_sdf = 0.0;
  double reversed_depth = 0.0;
  double physical = 0.0;
  double physical_uncertainty = 0.0;
};

inline double total_loss(const LossTerms& t, const LossWeights& w = {}) {
  const std::array<std::pair<const char*, std::pair<double, double>>, 10> terms{{
      {"rgb", {t.rgb, w.rgb}},
      {"depth", {t.depth, w.depth}},
      {"normal", {t.normal, w.normal}},
      {"semantic", {t.semantic, w.semantic}},
      {"eikonal", {t.eikonal, w.eikonal}},
      {"background_smoothness", {t.background_smoothness, w.background_smoothness}},
      {"object_point_sdf", {t.object_point_sdf, w.object_point_sdf}},
      {"reversed_depth", {t.reversed_depth, w.reversed_depth}},
      {"physical", {t.physical, w.physical}},
      {"physical_uncertainty", {t.physical_uncertainty, w.physical_uncertainty}},
  }};
  double total = 0.0;
  for (const auto& [name, tw] : terms) {
    if (!std::isfinite(tw.first)) throw Error(std::string("total_loss: non-finite term '") + name + "'");
    total += tw.second * tw.first;
  }
  return total;
}

}  // namespace physdf
