#pragma once

#include "physdf/core/vec.hpp"

namespace physdf {

struct StabilityThresholds {
  double max_translation = 0.05;   // m
  double max_rotation_deg = 5.0;   // degrees
};

/// An object is stable when it moved no more than the translation threshold
/// and turned no more than the rotation threshold.
inline bool stability_verdict(const Vec3d& initial_position, const Quatd& initial_orientation,
                              const Vec3d& final_position, const Quatd& final_orientation,
                              const StabilityThresholds& thresholds = {}) {
  const double moved = norm(final_position - initial_position);
  const double turned = degrees(rotation_angle_between(initial_orientation, final_orientation));
  return moved <= thresholds.max_translation && turned <= thresholds.max_rotation_deg;
}

}  // namespace physdf
