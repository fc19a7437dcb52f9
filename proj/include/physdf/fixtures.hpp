#pragma once

// Named scenes used by the tests, the acceptance checks and the CLI. Bodies
// and the supporting plane are built with the surface extraction pipeline on a
// 0.01 m lattice offset by half a cell, so the plane particles and the flat
// faces of boxes line up vertically.

#include <cmath>
#include <string>
#include <vector>

#include "physdf/adjoint.hpp"
#include "physdf/core/error.hpp"
#include "physdf/rigid_body.hpp"
#include "physdf/sdf_field.hpp"
#include "physdf/spmc.hpp"

namespace physdf::fixtures {

inline constexpr double kSpacing = 0.01;
inline constexpr double kGap = 0.009;  // initial height of the lowest particles above the plane

/// Surface particles of the plane z = height, one per lattice column in
/// [-half_width, half_width]^2 (columns at odd multiples of 0.005).
inline std::vector<Vec3d> plane_boundary(double height = 0.0, int columns_per_side = 16) {
  const double half = kSpacing * (double(columns_per_side) - 0.5);
  const std::size_t n = std::size_t(2 * columns_per_side);
  const Aabb box{{-half, -half, height - kSpacing / 2.0}, {half, half, height + kSpacing / 2.0}};
  const auto field = AnalyticSdf::halfspace({0.0, 0.0, 1.0}, height);
  return extract_surface_points(field, box, Dims{n, n, 2}).points;
}

/// Grid over [-h, h] per axis with the given cell count and spacing 0.01.
inline Aabb centred_box(int cells_x, int cells_y, int cells_z) {
  const Vec3d h{kSpacing * cells_x / 2.0, kSpacing * cells_y / 2.0, kSpacing * cells_z / 2.0};
  return {-h, h};
}

inline Dims dims_for(int cells_x, int cells_y, int cells_z) {
  return {std::size_t(cells_x + 1), std::size_t(cells_y + 1), std::size_t(cells_z + 1)};
}

/// Surface particles of an analytic shape centred at the origin, sampled on a
/// lattice with `cells` cells per axis.
inline std::vector<Vec3d> surface_particles(const AnalyticSdf& shape, int cx, int cy, int cz) {
  return extract_surface_points(shape, centred_box(cx, cy, cz), dims_for(cx, cy, cz)).points;
}

/// Translates points so the lowest lies `gap` above z = 0.
inline std::vector<Vec3d> lift_onto_plane(std::vector<Vec3d> points, double gap = kGap) {
  if (points.empty()) throw Error("lift_onto_plane: empty point set");
  double lowest = points.front()[2];
  for (const auto& p : points) lowest = std::min(lowest, p[2]);
  for (auto& p : points) p[2] += gap - lowest;
  return points;
}

inline std::vector<Vec3d> rotate_points(std::vector<Vec3d> points, const Quatd& q) {
  const Mat3d R = rotation_matrix(q);
  for (auto& p : points) p = R * p;
  return points;
}

/// Cube with 0.05 m half-extent, flat on the plane.
inline std::vector<Vec3d> cube() {
  return lift_onto_plane(surface_particles(AnalyticSdf::box({}, {0.05, 0.05, 0.05}), 15, 15, 15));
}

/// Box 0.05 x 0.05 x 0.2 m tilted 10 degrees about x, resting on one bottom edge.
inline std::vector<Vec3d> tall_box() {
  auto pts = surface_particles(AnalyticSdf::box({}, {0.025, 0.025, 0.1}), 8, 8, 25);
  pts = rotate_points(std::move(pts), Quatd::from_axis_angle({1.0, 0.0, 0.0}, radians(10.0)));
  return lift_onto_plane(std::move(pts));
}

/// Sphere of radius 0.05 m touching the plane.
inline std::vector<Vec3d> sphere() {
  return lift_onto_plane(surface_particles(AnalyticSdf::sphere({}, 0.05), 15, 15, 15));
}

/// One particle 1 mm above touching distance of a plane particle.
inline std::vector<Vec3d> single_particle() {
  return {{0.005, 0.005, 2.0 * 0.005 + 0.001}};
}

inline PhysicsScenario single_particle_scenario() {
  PhysicsScenario s;
  s.points = single_particle();
  s.boundary = plane_boundary(0.0, 4);
  s.horizon = 20;
  return s;
}

/// Free fall with nothing underneath (the plane sits far below the body).
inline PhysicsScenario free_fall_scenario() {
  PhysicsScenario s;
  s.points = {{0.0, 0.0, 0.0}, {0.02, 0.0, 0.0}, {0.0, 0.02, 0.0}};
  s.boundary = plane_boundary(-10.0, 2);
  s.horizon = 20;
  return s;
}

/// Four-particle body thrown sideways with spin so that its particles land
/// on the plane one after another and slide under friction.
inline PhysicsScenario slide_scenario() {
  PhysicsScenario s;
  s.points = {{-0.0145, -0.0009, 0.0142},
              {0.0196, 0.0047, 0.0243},
              {0.0045, 0.0227, 0.0287},
              {-0.0018, -0.0041, 0.0417}};
  s.linear_velocity = {0.472, 0.125, -0.019};
  s.angular_velocity = {-1.386, -0.923, -1.052};
  s.boundary = plane_boundary(0.0, 10);
  s.horizon = 10;
  return s;
}

inline std::vector<std::string> body_names() {
  return {"cube", "tall-box", "sphere", "single-particle"};
}

inline std::vector<Vec3d> body_by_name(const std::string& name) {
  if (name == "cube") return cube();
  if (name == "tall-box") return tall_box();
  if (name == "sphere") return sphere();
  if (name == "single-particle") return single_particle();
  throw Error("unknown body fixture '" + name + "'");
}

inline PhysicsScenario scenario_by_name(const std::string& name) {
  if (name == "slide") return slide_scenario();
  if (name == "single-particle") return single_particle_scenario();
  if (name == "free-fall") return free_fall_scenario();
  throw Error("unknown gradient scenario '" + name + "'");
}

}  // namespace physdf::fixtures
