#pragma once

// Gradients of the physical loss: with respect to the initial particle
// positions through a recorded simulation, and with respect to grid values
// through the surface refinement step.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "physdf/core/autodiff.hpp"
#include "physdf/core/error.hpp"
#include "physdf/core/vec.hpp"
#include "physdf/rigid_body.hpp"
#include "physdf/sdf_field.hpp"
#include "physdf/spmc.hpp"

namespace physdf {

/// Sum of first-contact displacements ||p' - p0|| over contacted particles.
/// A zero displacement contributes a constant 0 (subgradient 0).
template <class T>
T physical_loss(const std::vector<ContactRecord<T>>& contacts) {
  T total(0.0);
  for (const auto& c : contacts) {
    if (!c.contacted) continue;
    const Vec3<T> d = c.p_first - c.p0;
    if (value(squared_norm(d)) == 0.0) continue;
    total = total + norm(d);
  }
  return total;
}

/// A body dropped or thrown against a fixed boundary. The body starts
/// unrotated with its frame at the centre of mass of `points`.
struct PhysicsScenario {
  std::vector<Vec3d> points;
  Vec3d linear_velocity;
  Vec3d angular_velocity;
  std::vector<Vec3d> boundary;
  SimConfig cfg;
  int horizon = 20;  // steps simulated; the run stops early only if the body sleeps

  SimConfig horizon_config() const {
    if (horizon < 1) throw Error("PhysicsScenario: horizon must be >= 1");
    if (horizon > cfg.max_steps) throw Error("PhysicsScenario: horizon exceeds max_steps");
    SimConfig c = cfg;
    c.max_steps = horizon;
    return c;
  }
};

inline std::vector<double> flatten(const std::vector<Vec3d>& points) {
  std::vector<double> x;
  x.reserve(points.size() * 3);
  for (const auto& p : points) x.insert(x.end(), p.e.begin(), p.e.end());
  return x;
}

inline std::vector<Vec3d> unflatten(std::span<const double> x) {
  if (x.size() % 3 != 0) throw Error("unflatten: length is not a multiple of 3");
  std::vector<Vec3d> points;
  points.reserve(x.size() / 3);
  for (std::size_t i = 0; i < x.size(); i += 3) points.push_back({x[i], x[i + 1], x[i + 2]});
  return points;
}

template <class T>
SimResult<T> run_scenario(const PhysicsScenario& s, const std::vector<Vec3<T>>& points) {
  const SimConfig cfg = s.horizon_config();
  const RigidBody<T> body = build_body<T>(std::span<const Vec3<T>>(points), cfg.particle_mass,
                                          cfg.particle_radius);
  const BodyState<T> initial = rest_state(body, s.linear_velocity, s.angular_velocity);
  return simulate(body, initial, s.boundary, cfg);
}

/// Physical loss of the scenario with the particles placed at `x` (flattened xyz).
inline double scenario_loss(const PhysicsScenario& s, std::span<const double> x) {
  const auto pts = unflatten(x);
  return physical_loss(run_scenario<double>(s, pts).contacts);
}

struct AdjointResult {
  double loss = 0.0;
  std::vector<double> gradient;  // dL/dp0, flattened xyz per particle
  double min_decision_margin = 0.0;
  bool near_boundary = false;  // a recorded classification lies within 10 eps of a threshold
  std::size_t tape_size = 0;
};

/// Reverse-mode gradient of the physical loss with respect to the initial
/// particle positions. Branches (contact classes, clamps, sleep) are frozen
/// at the values taken in the forward run. `chunk` only changes how the
/// reverse sweep is segmented.
inline AdjointResult grad_loss_wrt_initial_points(const PhysicsScenario& s,
                                                  std::size_t chunk = 0) {
  ad::Tape tape;
  ad::ScopedTape scope(tape);
  std::vector<ad::Var> inputs;
  std::vector<Vec3<ad::Var>> pts;
  inputs.reserve(s.points.size() * 3);
  for (const auto& p : s.points) {
    Vec3<ad::Var> v;
    for (int d = 0; d < 3; ++d) {
      inputs.push_back(ad::Var::input(p[d]));
      v[d] = inputs.back();
    }
    pts.push_back(v);
  }
  const SimResult<ad::Var> run = run_scenario<ad::Var>(s, pts);
  const ad::Var loss = physical_loss(run.contacts);

  AdjointResult r;
  r.loss = loss.value();
  r.gradient = ad::gradient(tape, loss, inputs, chunk);
  r.min_decision_margin = run.min_decision_margin;
  r.near_boundary = run.min_decision_margin < 10.0 * s.cfg.velocity_epsilon;
  r.tape_size = tape.size();
  return r;
}

/// Central differences (L(x + h e_i) - L(x - h e_i)) / 2h for every coordinate.
inline std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& loss,
                                             std::span<const double> x, double h) {
  if (!(h > 0.0)) throw Error("finite_difference: h must be positive");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = loss(probe);
    probe[i] = x[i] - h;
    const double down = loss(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw Error("finite_difference: non-finite loss when perturbing coordinate " +
                  std::to_string(i));
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

/// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradientReport {
  std::vector<double> analytic;
  std::vector<double> numeric;
  double max_rel_error = 0.0;
  double component_pass_fraction = 0.0;
  double tolerance = 1e-3;
  double loss = 0.0;
  bool near_boundary = false;
  double min_decision_margin = 0.0;
};

inline GradientReport compare_gradients(std::vector<double> analytic, std::vector<double> numeric,
                                        double tolerance) {
  if (analytic.size() != numeric.size())
    throw Error("compare_gradients: analytic and numeric lengths differ");
  GradientReport r;
  r.tolerance = tolerance;
  std::size_t pass = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double e = relative_error(analytic[i], numeric[i]);
    r.max_rel_error = std::max(r.max_rel_error, e);
    if (e <= tolerance) ++pass;
  }
  r.component_pass_fraction = analytic.empty() ? 1.0 : double(pass) / double(analytic.size());
  r.analytic = std::move(analytic);
  r.numeric = std::move(numeric);
  return r;
}

/// Adjoint gradient of the scenario's physical loss checked against central
/// differences.
inline GradientReport gradcheck(const PhysicsScenario& s, double h = 1e-6,
                                double tolerance = 1e-3) {
  AdjointResult adj = grad_loss_wrt_initial_points(s);
  const auto x = flatten(s.points);
  auto numeric = finite_difference(
      [&](std::span<const double> y) { return scenario_loss(s, y); }, x, h);
  GradientReport r = compare_gradients(std::move(adj.gradient), std::move(numeric), tolerance);
  r.loss = adj.loss;
  r.near_boundary = adj.near_boundary;
  r.min_decision_margin = adj.min_decision_margin;
  return r;
}

// ---------------------------------------------------------------------------
// Refinement step
// ---------------------------------------------------------------------------

/// Gradient over grid values of sum_k upstream_k . p_fine_k where
/// p_fine = p - f(p) grad f(p) and the coarse points p are held constant.
inline std::vector<double> grad_refinement_wrt_grid(const std::vector<Vec3d>& coarse,
                                                    const SdfGrid& grid,
                                                    const std::vector<Vec3d>& upstream) {
  if (coarse.size() != upstream.size())
    throw Error("grad_refinement_wrt_grid: one upstream vector per point is required");
  std::vector<double> g(grid.size(), 0.0);
  const auto& theta = grid.values();
  for (std::size_t k = 0; k < coarse.size(); ++k) {
    const Vec3d& up = upstream[k];
    if (up == Vec3d{}) continue;
    const SdfGrid::Stencil s = grid.stencil(coarse[k]);
    double f = 0.0;
    Vec3d grad;
    for (std::size_t c = 0; c < 8; ++c) {
      f += s.weight[c] * theta[s.index[c]];
      grad += s.weight_gradient[c] * theta[s.index[c]];
    }
    const double up_dot_grad = dot(up, grad);
    for (std::size_t c = 0; c < 8; ++c)
      g[s.index[c]] -= up_dot_grad * s.weight[c] + f * dot(up, s.weight_gradient[c]);
  }
  return g;
}

/// Refined positions p - f(p) grad f(p) from the grid interpolant.
inline std::vector<Vec3d> refine_with_grid(const std::vector<Vec3d>& coarse, const SdfGrid& grid) {
  std::vector<Vec3d> out;
  out.reserve(coarse.size());
  for (const auto& p : coarse) {
    const SdfQuery q = grid.query(p);
    out.push_back(p - q.gradient * q.value);
  }
  return out;
}

struct GridGradientResult {
  double loss = 0.0;
  std::vector<double> gradient;  // one entry per grid value
  std::vector<Vec3d> coarse;
  std::vector<Vec3d> fine;
  bool near_boundary = false;
};

/// Grid values -> coarse points (detached) -> refinement -> simulation ->
/// physical loss. `scenario.points` is replaced by the refined points.
inline GridGradientResult grad_loss_wrt_grid(const SdfGrid& grid, PhysicsScenario scenario) {
  GridGradientResult r;
  r.coarse = extract_coarse(grid).points;
  if (r.coarse.empty()) throw Error("grad_loss_wrt_grid: grid has no surface crossings");
  SdfGrid clamped = grid;
  clamped.set_clamp_queries(true);
  r.fine = refine_with_grid(r.coarse, clamped);
  scenario.points = r.fine;
  const AdjointResult adj = grad_loss_wrt_initial_points(scenario);
  r.loss = adj.loss;
  r.near_boundary = adj.near_boundary;
  r.gradient = grad_refinement_wrt_grid(r.coarse, clamped, unflatten(adj.gradient));
  return r;
}

}  // namespace physdf
