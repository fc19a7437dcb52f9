#pragma once

// JSON encodings of reports and records, and the flat run configuration used
// by the command-line tool. Requires nlohmann/json.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "physdf/adjoint.hpp"
#include "physdf/core/error.hpp"
#include "physdf/core/vec.hpp"
#include "physdf/losses.hpp"
#include "physdf/metrics.hpp"
#include "physdf/rigid_body.hpp"

namespace physdf {

using Json = nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

inline Json to_json(const Vec3d& v) { return Json::array({v[0], v[1], v[2]}); }
inline Json to_json(const Quatd& q) { return Json::array({q.w, q.x, q.y, q.z}); }

inline Vec3d vec3_from_json(const Json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw Error(what + ": expected an array of 3 numbers");
  Vec3d v;
  for (int d = 0; d < 3; ++d) {
    if (!j[std::size_t(d)].is_number()) throw Error(what + ": expected numbers");
    v[d] = j[std::size_t(d)].get<double>();
  }
  return v;
}

inline Json to_json(const StepRecord& s) {
  return Json{{"step", s.step},
              {"t", s.t},
              {"position", to_json(s.position)},
              {"quaternion", to_json(s.orientation)},
              {"v", to_json(s.linear_velocity)},
              {"omega", to_json(s.angular_velocity)},
              {"asleep", s.asleep},
              {"n_colliding_pairs", s.n_colliding_pairs}};
}

/// One JSON object per line.
inline std::string trajectory_jsonl(const std::vector<StepRecord>& trajectory) {
  std::string out;
  for (const auto& s : trajectory) out += to_json(s).dump() + '\n';
  return out;
}

inline Json to_json(const std::vector<ContactRecord<double>>& records) {
  Json arr = Json::array();
  for (const auto& r : records)
    arr.push_back(Json{{"particle_index", r.particle_index},
                       {"p0", to_json(r.p0)},
                       {"p_first", to_json(r.p_first)},
                       {"contacted", r.contacted},
                       {"step", r.step}});
  return arr;
}

inline Json to_json(const MetricReport& m) {
  Json j{{"accuracy_cm", m.accuracy},   {"completeness_cm", m.completeness},
         {"chamfer_cm", m.chamfer},     {"precision_pct", m.precision},
         {"recall_pct", m.recall},      {"fscore_pct", m.fscore}};
  if (m.normal_consistency) {
    j["normal_accuracy"] = *m.normal_accuracy;
    j["normal_completeness"] = *m.normal_completeness;
    j["normal_consistency"] = *m.normal_consistency;
  }
  return j;
}

/// Aligned plain-text table of a metric report.
inline std::string metric_table(const MetricReport& m) {
  std::string s;
  char buf[96];
  auto row = [&](const char* name, double v, const char* unit) {
    std::snprintf(buf, sizeof buf, "%-20s %12.6f %s\n", name, v, unit);
    s += buf;
  };
  row("accuracy", m.accuracy, "cm");
  row("completeness", m.completeness, "cm");
  row("chamfer", m.chamfer, "cm");
  row("precision", m.precision, "%");
  row("recall", m.recall, "%");
  row("fscore", m.fscore, "%");
  if (m.normal_consistency) {
    row("normal_accuracy", *m.normal_accuracy, "");
    row("normal_completeness", *m.normal_completeness, "");
    row("normal_consistency", *m.normal_consistency, "");
  }
  return s;
}

inline Json to_json(const GradientReport& r) {
  return Json{{"analytic", r.analytic},
              {"numeric", r.numeric},
              {"max_rel_error", r.max_rel_error},
              {"component_pass_fraction", r.component_pass_fraction},
              {"tolerance", r.tolerance},
              {"loss", r.loss},
              {"near_boundary", r.near_boundary},
              {"min_decision_margin", std::isfinite(r.min_decision_margin) ? Json(r.min_decision_margin)
                                                                           : Json(nullptr)}};
}

inline Json to_json(const DropTestReport& r) {
  Json objs = Json::array();
  for (const auto& o : r.objects)
    objs.push_back(Json{{"name", o.name},
                        {"stable", o.stable},
                        {"translation_m", o.translation},
                        {"rotation_deg", o.rotation_degrees},
                        {"steps", o.steps},
                        {"asleep", o.asleep}});
  return Json{{"objects", objs},
              {"stability_ratio", r.stability_ratio},
              {"stability_ratio_text", format_ratio(r.stability_ratio)},
              {"simulator", "built-in particle simulator"}};
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Every recognised key with its default. Values in a config file must have
/// the same JSON type as the default (any number for numeric keys).
inline Json default_run_config() {
  const SimConfig sim;
  const LossWeights w;
  return Json{
      // simulation
      {"dt", sim.dt},
      {"gravity", to_json(sim.gravity)},
      {"restitution", sim.restitution},
      {"friction", sim.friction},
      {"velocity_epsilon", sim.velocity_epsilon},
      {"sleep_weight", sim.sleep_weight},
      {"max_steps", sim.max_steps},
      {"impulse_max_iterations", sim.impulse_max_iterations},
      {"particle_radius", sim.particle_radius},
      {"particle_mass", sim.particle_mass},
      {"symplectic", sim.symplectic},
      {"sleep_hold_time", sim.sleep_hold_time},
      {"support_margin", 0.05},
      // surface extraction
      {"field", "sphere(0,0,0,0.5)"},
      {"bbox", Json::array({-1.0, -1.0, -1.0, 1.0, 1.0, 1.0})},
      {"dims", Json::array({33, 33, 33})},
      {"refine_iterations", 1},
      {"delta", 0.1},
      {"input", ""},
      // uncertainty and sampling
      {"xi", 100.0},
      {"step_size", 0.01},
      {"samples_per_record", 8},
      {"guided_count", 768},
      {"random_count", 256},
      {"image", ""},
      {"image_width", 32},
      {"image_height", 32},
      // rendering and losses
      {"sharpness", 50.0},
      {"semantic_gamma", 20.0},
      {"weight_rgb", w.rgb},
      {"weight_depth", w.depth},
      {"weight_normal", w.normal},
      {"weight_semantic", w.semantic},
      {"weight_eikonal", w.eikonal},
      {"weight_background_smoothness", w.background_smoothness},
      {"weight_object_point_sdf", w.object_point_sdf},
      {"weight_reversed_depth", w.reversed_depth},
      {"weight_physical", w.physical},
      {"weight_physical_increment", 30.0},
      {"weight_physical_uncertainty", w.physical_uncertainty},
      // scenarios, gradients, metrics
      {"fixture", "cube"},
      {"objects", Json::array({"cube", "tall-box", "sphere"})},
      {"scenario", "slide"},
      {"horizon", 0},
      {"fd_step", 1e-6},
      {"gradient_tolerance", 1e-3},
      {"pred", ""},
      {"gt", ""},
      {"threshold", 0.05},
      {"norm", "l1"},
      {"seed", 0},
  };
}

/// Defaults overlaid with `overrides`. Unknown keys and type mismatches throw.
inline Json resolve_run_config(const Json& overrides) {
  if (!overrides.is_object()) throw Error("config: top level must be a JSON object");
  Json cfg = default_run_config();
  for (const auto& [key, value] : overrides.items()) {
    if (!cfg.contains(key)) throw Error("config: unknown key '" + key + "'");
    const Json& def = cfg[key];
    const bool integral_default = def.is_number_integer() || def.is_number_unsigned();
    if (def.is_number()) {
      if (!value.is_number()) throw Error("config: key '" + key + "' must be a number");
      if (integral_default && !(value.is_number_integer() || value.is_number_unsigned()))
        throw Error("config: key '" + key + "' must be an integer");
    } else if (def.type() != value.type()) {
      throw Error("config: key '" + key + "' has the wrong type");
    }
    cfg[key] = value;
  }
  return cfg;
}

inline SimConfig sim_config_from(const Json& cfg) {
  SimConfig s;
  s.dt = cfg.at("dt").get<double>();
  s.gravity = vec3_from_json(cfg.at("gravity"), "config: gravity");
  s.restitution = cfg.at("restitution").get<double>();
  s.friction = cfg.at("friction").get<double>();
  s.velocity_epsilon = cfg.at("velocity_epsilon").get<double>();
  s.sleep_weight = cfg.at("sleep_weight").get<double>();
  s.max_steps = cfg.at("max_steps").get<int>();
  s.impulse_max_iterations = cfg.at("impulse_max_iterations").get<int>();
  s.particle_radius = cfg.at("particle_radius").get<double>();
  s.particle_mass = cfg.at("particle_mass").get<double>();
  s.symplectic = cfg.at("symplectic").get<bool>();
  s.sleep_hold_time = cfg.at("sleep_hold_time").get<double>();
  s.validate();
  return s;
}

inline LossWeights loss_weights_from(const Json& cfg) {
  LossWeights w;
  w.rgb = cfg.at("weight_rgb").get<double>();
  w.depth = cfg.at("weight_depth").get<double>();
  w.normal = cfg.at("weight_normal").get<double>();
  w.semantic = cfg.at("weight_semantic").get<double>();
  w.eikonal = cfg.at("weight_eikonal").get<double>();
  w.background_smoothness = cfg.at("weight_background_smoothness").get<double>();
  w.object_point_sdf = cfg.at("weight_object_point_sdf").get<double>();
  w.reversed_depth = cfg.at("weight_reversed_depth").get<double>();
  w.physical = cfg.at("weight_physical").get<double>();
  w.physical_uncertainty = cfg.at("weight_physical_uncertainty").get<double>();
  return w;
}

/// FNV-1a 64-bit hash.
inline std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Manifest written next to every command's outputs; it carries everything
/// needed to run the command again.
inline Json make_manifest(const std::string& command, const Json& resolved_config,
                          const std::vector<std::string>& outputs) {
  return Json{{"command", command},
              {"config", resolved_config},
              {"config_hash", hex64(fnv1a64(resolved_config.dump()))},
              {"seed", resolved_config.at("seed")},
              {"version", kVersion},
              {"outputs", outputs}};
}

}  // namespace physdf
