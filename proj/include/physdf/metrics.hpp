#pragma once

// Point-cloud reconstruction metrics, stability ratio and a drop-test harness.

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "physdf/core/error.hpp"
#include "physdf/core/vec.hpp"
#include "physdf/rigid_body.hpp"
#include "physdf/spmc.hpp"
#include "physdf/stability.hpp"

namespace physdf {

enum class PointNorm { kL1, kL2 };

inline double point_distance(const Vec3d& a, const Vec3d& b, PointNorm n) {
  return n == PointNorm::kL1 ? norm1(a - b) : norm(a - b);
}

struct NearestResult {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Exhaustive nearest neighbour; ties go to the lowest index.
inline NearestResult nearest(const Vec3d& p, const std::vector<Vec3d>& cloud, PointNorm n) {
  NearestResult best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double d = point_distance(p, cloud[i], n);
    if (d < best.distance) best = {i, d};
  }
  return best;
}

struct MetricReport {
  double accuracy = 0.0;      // cm
  double completeness = 0.0;  // cm
  double chamfer = 0.0;       // cm
  double precision = 0.0;     // %
  double recall = 0.0;        // %
  double fscore = 0.0;        // %
  std::optional<double> normal_accuracy;
  std::optional<double> normal_completeness;
  std::optional<double> normal_consistency;
};

/// Accuracy/completeness, precision/recall at `threshold` metres and normal
/// consistency. Distances use the 1-norm unless `n` says otherwise. Normal
/// terms are left empty when either cloud lacks normals.
inline MetricReport chamfer_fscore_nc(const SurfacePointCloud& pred, const SurfacePointCloud& gt,
                                      double threshold = 0.05, PointNorm n = PointNorm::kL1) {
  if (pred.empty() || gt.empty()) throw Error("chamfer_fscore_nc: both clouds must be nonempty");
  if (!(threshold > 0.0)) throw Error("chamfer_fscore_nc: threshold must be positive");
  const bool normals = pred.has_normals() && gt.has_normals();

  double acc = 0.0, prec = 0.0, nacc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const NearestResult r = nearest(pred.points[i], gt.points, n);
    acc += r.distance;
    if (r.distance < threshold) prec += 1.0;
    if (normals) nacc += dot(pred.normals[i], gt.normals[r.index]);
  }
  double comp = 0.0, rec = 0.0, ncomp = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const NearestResult r = nearest(gt.points[i], pred.points, n);
    comp += r.distance;
    if (r.distance < threshold) rec += 1.0;
    if (normals) ncomp += dot(pred.normals[r.index], gt.normals[i]);
  }
  const double np = double(pred.size()), ng = double(gt.size());

  MetricReport m;
  m.accuracy = 100.0 * acc / np;
  m.completeness = 100.0 * comp / ng;
  m.chamfer = (m.accuracy + m.completeness) / 2.0;
  const double P = prec / np, R = rec / ng;
  m.precision = 100.0 * P;
  m.recall = 100.0 * R;
  m.fscore = (P + R) > 0.0 ? 100.0 * 2.0 * P * R / (P + R) : 0.0;
  if (normals) {
    m.normal_accuracy = nacc / np;
    m.normal_completeness = ncomp / ng;
    m.normal_consistency = (*m.normal_accuracy + *m.normal_completeness) / 2.0;
  }
  return m;
}

inline bool stability_verdict(const BodyState<double>& initial, const BodyState<double>& final_state,
                              const StabilityThresholds& thresholds = {}) {
  return stability_verdict(initial.position, initial.orientation, final_state.position,
                           final_state.orientation, thresholds);
}

/// Percentage of stable objects.
inline double stability_ratio(const std::vector<bool>& verdicts) {
  if (verdicts.empty()) throw Error("stability_ratio: no verdicts");
  std::size_t stable = 0;
  for (bool v : verdicts) stable += v ? 1u : 0u;
  return 100.0 * double(stable) / double(verdicts.size());
}

/// Two-decimal rendering used in reports, e.g. "84.62".
inline std::string format_ratio(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", percent);
  return buf;
}

/// Drop-test protocol: 200 steps of 0.016 s, never stopping early.
inline SimConfig drop_test_config(SimConfig base = {}) {
  base.dt = 0.016;
  base.max_steps = 200;
  return base;
}

struct DropObject {
  std::string name;
  std::vector<Vec3d> points;
};

struct DropOutcome {
  std::string name;
  bool stable = false;
  double translation = 0.0;       // m
  double rotation_degrees = 0.0;
  int steps = 0;
  bool asleep = false;
};

struct DropTestReport {
  std::vector<DropOutcome> objects;
  double stability_ratio = 0.0;
};

/// Simulates every object from rest against the boundary particles beneath it
/// and aggregates the verdicts.
inline DropTestReport drop_test(const std::vector<DropObject>& objects,
                                const std::vector<Vec3d>& boundary,
                                const SimConfig& protocol = drop_test_config(),
                                double support_margin = 0.05) {
  if (objects.empty()) throw Error("drop_test: no objects");
  DropTestReport report;
  std::vector<bool> verdicts;
  for (const auto& obj : objects) {
    const auto support = select_supporting_plane(obj.points, boundary, support_margin);
    if (support.empty()) throw Error("drop_test: no boundary particles beneath '" + obj.name + "'");
    const RigidBody<double> body = build_body<double>(std::span<const Vec3d>(obj.points),
                                                      protocol.particle_mass, protocol.particle_radius);
    Simulator<double> sim(body, rest_state(body), support, protocol);
    // The protocol runs the full horizon; a sleeping body simply stays put.
    while (sim.steps_taken() < protocol.max_steps) sim.step();
    const SimResult<double> r = sim.result();
    DropOutcome o;
    o.name = obj.name;
    o.stable = r.stable;
    o.translation = norm(r.final_state.position - r.initial.position);
    o.rotation_degrees = degrees(rotation_angle_between(r.initial.orientation, r.final_state.orientation));
    o.steps = r.steps;
    o.asleep = r.final_state.asleep;
    verdicts.push_back(o.stable);
    report.objects.push_back(std::move(o));
  }
  report.stability_ratio = stability_ratio(verdicts);
  return report;
}

}  // namespace physdf
