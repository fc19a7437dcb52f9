// physdf command-line tool.
//
// Settings resolve in this order, later wins:
//   built-in defaults < --config FILE < --set KEY=VALUE < command flags < --seed
// Every command writes manifest.json next to its outputs; `physdf rerun
// MANIFEST` repeats the run from the manifest alone.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "physdf/field_spec.hpp"
#include "physdf/fixtures.hpp"
#include "physdf/io.hpp"
#include "physdf/physdf.hpp"
#include "physdf/serialize.hpp"

namespace fs = std::filesystem;
using namespace physdf;

namespace {

struct Invocation {
  std::string config_path;
  std::string out = "out";
  std::optional<std::int64_t> seed;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // config key -> raw flag text
};

struct Context {
  Json cfg;
  fs::path out;
  std::vector<std::string> outputs;

  void text(const std::string& name, const std::string& data) {
    io::write_text((out / name).string(), data);
    outputs.push_back(name);
  }
  void bytes(const std::string& name, const io::Bytes& data) {
    io::write_file((out / name).string(), data);
    outputs.push_back(name);
  }
};

Json read_json_file(const std::string& path) {
  const io::Bytes b = io::read_file(path);
  try {
    return Json::parse(b.begin(), b.end());
  } catch (const Json::parse_error& e) {
    throw Error("'" + path + "' is not valid JSON: " + e.what());
  }
}

// Converts flag text to the JSON type of the key's default. Array keys accept
// comma lists without brackets; a single number fills every slot.
Json flag_value(const std::string& key, const std::string& raw) {
  const Json defaults = default_run_config();
  if (!defaults.contains(key)) throw Error("unknown config key '" + key + "'");
  const Json& def = defaults[key];
  if (def.is_string()) return raw;
  std::string text = raw;
  const bool listed = !text.empty() && text.front() == '[';
  if (def.is_array() && !def.empty() && def[0].is_string() && !listed) {
    Json names = Json::array();
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto comma = std::min(text.find(',', start), text.size());
      names.push_back(text.substr(start, comma - start));
      start = comma + 1;
    }
    return names;
  }
  if (def.is_array() && !listed) text = "[" + text + "]";
  Json v;
  try {
    v = Json::parse(text);
  } catch (const Json::parse_error&) {
    throw Error("cannot parse value '" + raw + "' for key '" + key + "'");
  }
  if (def.is_array() && def.size() == 3 && v.is_array() && v.size() == 1 && v[0].is_number())
    v = Json::array({v[0], v[0], v[0]});
  return v;
}

Json resolve(const Invocation& inv) {
  Json overrides = Json::object();
  if (!inv.config_path.empty()) overrides = read_json_file(inv.config_path);
  if (!overrides.is_object()) throw Error("config: top level must be a JSON object");
  for (const auto& s : inv.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw Error("--set expects KEY=VALUE, got '" + s + "'");
    const std::string key = s.substr(0, eq);
    overrides[key] = flag_value(key, s.substr(eq + 1));
  }
  for (const auto& [key, raw] : inv.flags) overrides[key] = flag_value(key, raw);
  if (inv.seed) overrides["seed"] = *inv.seed;
  return resolve_run_config(overrides);
}

Dims dims_from(const Json& cfg) {
  const Json& d = cfg.at("dims");
  if (d.size() != 3) throw Error("config: dims must have 3 entries");
  Dims out{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!d[i].is_number_integer() || d[i].get<std::int64_t>() < 2)
      throw Error("config: dims must be integers >= 2 (entry " + std::to_string(i) + " is " +
                  d[i].dump() + ")");
    out[i] = d[i].get<std::size_t>();
  }
  return out;
}

Aabb bbox_from(const Json& cfg) {
  const Json& b = cfg.at("bbox");
  if (b.size() != 6) throw Error("config: bbox must have 6 numbers (min xyz, max xyz)");
  Aabb box;
  for (std::size_t i = 0; i < 3; ++i) {
    if (!b[i].is_number() || !b[i + 3].is_number()) throw Error("config: bbox entries must be numbers");
    box.min[int(i)] = b[i].get<double>();
    box.max[int(i)] = b[i + 3].get<double>();
  }
  box.validate();
  return box;
}

int int_key(const Json& cfg, const std::string& key, int min) {
  const auto v = cfg.at(key).get<std::int64_t>();
  if (v < min) throw Error("config: " + key + " must be >= " + std::to_string(min));
  return int(v);
}

std::vector<Vec3d> fixture_support(const std::vector<Vec3d>& body, double margin) {
  auto support = select_supporting_plane(body, fixtures::plane_boundary(), margin);
  if (support.empty()) throw Error("no plane particles beneath the fixture");
  return support;
}

// ---------------------------------------------------------------------------

void cmd_voxelize(Context& c) {
  const AnalyticSdf field = parse_field_spec(c.cfg.at("field").get<std::string>());
  const SdfGrid grid = voxelize(field, bbox_from(c.cfg), dims_from(c.cfg));
  c.bytes("grid.sdfg", io::encode_sdf(grid));
}

void cmd_extract_surface(Context& c) {
  const int iterations = int_key(c.cfg, "refine_iterations", 1);
  const std::string input = c.cfg.at("input").get<std::string>();
  SurfacePointCloud cloud;
  if (!input.empty()) {
    cloud = extract_surface_points(io::load_sdf(input), iterations);
  } else {
    const AnalyticSdf field = parse_field_spec(c.cfg.at("field").get<std::string>());
    cloud = extract_surface_points(field, bbox_from(c.cfg), dims_from(c.cfg), iterations);
  }
  c.text("surface.ply", io::encode_ply(cloud));
  c.bytes("surface.spc1", io::encode_spc1(cloud));
}

void cmd_simulate(Context& c) {
  const SimConfig sim = sim_config_from(c.cfg);
  const auto points = fixtures::body_by_name(c.cfg.at("fixture").get<std::string>());
  const auto body = build_body<double>(std::span<const Vec3d>(points), sim.particle_mass,
                                       sim.particle_radius);
  const auto r = simulate(body, rest_state(body),
                          fixture_support(points, c.cfg.at("support_margin").get<double>()), sim);
  c.text("trajectory.jsonl", trajectory_jsonl(r.trajectory));
  c.text("contacts.json", to_json(r.contacts).dump(2) + "\n");
  const Json summary{
      {"fixture", c.cfg.at("fixture")},
      {"steps", r.steps},
      {"stable", r.stable},
      {"asleep", r.final_state.asleep},
      {"final_position", to_json(r.final_state.position)},
      {"final_quaternion", to_json(r.final_state.orientation)},
      {"min_decision_margin",
       std::isfinite(r.min_decision_margin) ? Json(r.min_decision_margin) : Json(nullptr)}};
  c.text("summary.json", summary.dump(2) + "\n");
}

void cmd_drop_test(Context& c) {
  const SimConfig protocol = drop_test_config(sim_config_from(c.cfg));
  const double margin = c.cfg.at("support_margin").get<double>();
  std::vector<DropObject> objects;
  for (const auto& name : c.cfg.at("objects")) {
    if (!name.is_string()) throw Error("config: objects must be fixture names");
    objects.push_back({name.get<std::string>(), fixtures::body_by_name(name.get<std::string>())});
  }
  const DropTestReport report = drop_test(objects, fixtures::plane_boundary(), protocol, margin);
  c.text("drop_test.json", to_json(report).dump(2) + "\n");
  std::string table;
  char buf[160];
  for (const auto& o : report.objects) {
    std::snprintf(buf, sizeof buf, "%-16s %-8s translation %.6f m  rotation %.4f deg\n",
                  o.name.c_str(), o.stable ? "stable" : "unstable", o.translation,
                  o.rotation_degrees);
    table += buf;
  }
  table += "SR " + format_ratio(report.stability_ratio) + "\n";
  c.text("drop_test.txt", table);
}

void cmd_gradcheck(Context& c) {
  PhysicsScenario s = fixtures::scenario_by_name(c.cfg.at("scenario").get<std::string>());
  s.cfg = sim_config_from(c.cfg);
  const int horizon = int_key(c.cfg, "horizon", 0);
  if (horizon > 0) s.horizon = horizon;
  const GradientReport r =
      gradcheck(s, c.cfg.at("fd_step").get<double>(), c.cfg.at("gradient_tolerance").get<double>());
  Json j = to_json(r);
  j["scenario"] = c.cfg.at("scenario");
  j["horizon"] = s.horizon;
  c.text("gradcheck.json", j.dump(2) + "\n");
}

// Physical uncertainty rendered top-down over the contact footprint of a
// simulated fixture.
io::Image synthetic_uncertainty_image(Context& c) {
  const SimConfig sim = sim_config_from(c.cfg);
  const auto points = fixtures::body_by_name(c.cfg.at("fixture").get<std::string>());
  const auto body = build_body<double>(std::span<const Vec3d>(points), sim.particle_mass,
                                       sim.particle_radius);
  const auto r = simulate(body, rest_state(body),
                          fixture_support(points, c.cfg.at("support_margin").get<double>()), sim);

  const Aabb box = expand_boundary(points, c.cfg.at("delta").get<double>());
  UncertaintyGrid grid(dims_from(c.cfg), box);
  grid = update_uncertainty(grid, uncertain_points(r.contacts, int_key(c.cfg, "samples_per_record", 2)),
                            c.cfg.at("xi").get<double>(), c.cfg.at("step_size").get<double>());
  c.bytes("uncertainty.uphy", io::encode_uncertainty(grid));

  SceneModel scene;
  scene.objects = {AnalyticSdf::halfspace({0.0, 0.0, 1.0}, 0.0)};
  scene.sharpness = c.cfg.at("sharpness").get<double>();
  scene.semantic_gamma = c.cfg.at("semantic_gamma").get<double>();

  io::Image img;
  img.width = std::size_t(int_key(c.cfg, "image_width", 1));
  img.height = std::size_t(int_key(c.cfg, "image_height", 1));
  img.pixels.resize(img.width * img.height);
  const Vec3d e = box.extent();
  for (std::size_t row = 0; row < img.height; ++row)
    for (std::size_t col = 0; col < img.width; ++col) {
      const double x = box.min[0] + e[0] * (double(col) + 0.5) / double(img.width);
      const double y = box.max[1] - e[1] * (double(row) + 0.5) / double(img.height);
      const Ray ray = make_ray({x, y, box.max[2]}, {0.0, 0.0, -1.0}, 0.0, e[2], 64);
      img.pixels[row * img.width + col] = render_ray(scene, ray, &grid).u_physical;
    }
  c.bytes("uncertainty.pfm", io::encode_pfm(img.width, img.height, img.pixels));
  return img;
}

void cmd_sample_pixels(Context& c) {
  const std::string path = c.cfg.at("image").get<std::string>();
  const io::Image img = path.empty() ? synthetic_uncertainty_image(c) : io::decode_pfm(io::read_file(path));
  const auto probs = sampling_probabilities(img.pixels);
  const auto seed = c.cfg.at("seed").get<std::int64_t>();
  if (seed < 0) throw Error("config: seed must be >= 0");
  const auto idx = sample_pixels(probs, int_key(c.cfg, "guided_count", 0),
                                 int_key(c.cfg, "random_count", 0), std::uint64_t(seed));
  Json pixels = Json::array();
  for (std::size_t i : idx) pixels.push_back(Json::array({i % img.width, i / img.width}));
  const Json j{{"width", img.width},
               {"height", img.height},
               {"seed", seed},
               {"guided_count", c.cfg.at("guided_count")},
               {"random_count", c.cfg.at("random_count")},
               {"indices", idx},
               {"pixels_xy", pixels}};
  c.text("samples.json", j.dump() + "\n");
}

void cmd_metrics(Context& c) {
  const std::string pred_path = c.cfg.at("pred").get<std::string>();
  const std::string gt_path = c.cfg.at("gt").get<std::string>();
  if (pred_path.empty() != gt_path.empty()) throw Error("metrics: give both pred and gt, or neither");
  SurfacePointCloud pred, gt;
  if (pred_path.empty()) {
    // Coarse extraction of the configured field scored against a 2x finer one.
    const AnalyticSdf field = parse_field_spec(c.cfg.at("field").get<std::string>());
    const Aabb box = bbox_from(c.cfg);
    const Dims d = dims_from(c.cfg);
    pred = extract_surface_points(field, box, d);
    gt = extract_surface_points(field, box, Dims{2 * d[0] - 1, 2 * d[1] - 1, 2 * d[2] - 1});
  } else {
    pred = io::load_points(pred_path);
    gt = io::load_points(gt_path);
  }
  const std::string norm_name = c.cfg.at("norm").get<std::string>();
  if (norm_name != "l1" && norm_name != "l2") throw Error("config: norm must be 'l1' or 'l2'");
  const MetricReport m = chamfer_fscore_nc(pred, gt, c.cfg.at("threshold").get<double>(),
                                           norm_name == "l1" ? PointNorm::kL1 : PointNorm::kL2);
  Json j = to_json(m);
  j["norm"] = norm_name;
  j["pred_points"] = pred.size();
  j["gt_points"] = gt.size();
  c.text("metrics.json", j.dump(2) + "\n");
  c.text("metrics.txt", metric_table(m));
}

const std::map<std::string, std::function<void(Context&)>>& commands() {
  static const std::map<std::string, std::function<void(Context&)>> table{
      {"voxelize", cmd_voxelize},         {"extract-surface", cmd_extract_surface},
      {"simulate", cmd_simulate},         {"drop-test", cmd_drop_test},
      {"gradcheck", cmd_gradcheck},       {"sample-pixels", cmd_sample_pixels},
      {"metrics", cmd_metrics}};
  return table;
}

void execute(const std::string& command, const Json& cfg, const std::string& out) {
  Context c{cfg, fs::path(out), {}};
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw Error("cannot create output directory '" + out + "': " + ec.message());
  commands().at(command)(c);
  io::write_text((c.out / "manifest.json").string(),
                 make_manifest(command, cfg, c.outputs).dump(2) + "\n");
}

void rerun(const std::string& manifest_path, const std::string& out) {
  const Json m = read_json_file(manifest_path);
  for (const char* key : {"command", "config", "config_hash"})
    if (!m.contains(key)) throw Error("manifest: missing '" + std::string(key) + "'");
  const std::string command = m.at("command").get<std::string>();
  if (!commands().count(command)) throw Error("manifest: unknown command '" + command + "'");
  if (m.at("version") != kVersion)
    throw Error("manifest: written by version " + m.at("version").dump() + ", this is " + kVersion);
  const Json cfg = resolve_run_config(m.at("config"));
  if (hex64(fnv1a64(cfg.dump())) != m.at("config_hash").get<std::string>())
    throw Error("manifest: config does not match config_hash");
  execute(command, cfg, out);
}

void print_error(const std::string& command, const std::string& message) {
  std::cerr << Json{{"status", "error"}, {"command", command}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  warning_sink() = [](const std::string& msg) {
    std::cerr << Json{{"status", "warning"}, {"message", msg}}.dump() << '\n';
  };

  CLI::App app{"physdf: SDF surface points, particle rigid-body simulation and evaluation"};
  app.require_subcommand(1);

  Invocation inv;
  std::string manifest_path;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", inv.config_path, "JSON config file");
    sub->add_option("--seed", inv.seed, "random seed");
    sub->add_option("--out", inv.out, "output directory")->capture_default_str();
    sub->add_option("--set", inv.sets, "KEY=VALUE config override (repeatable)");
  };
  auto flag = [&](CLI::App* sub, const std::string& name, const std::string& key,
                  const std::string& help) {
    sub->add_option_function<std::string>(
        name, [&inv, key](const std::string& v) { inv.flags[key] = v; }, help);
  };

  auto* vox = app.add_subcommand("voxelize", "sample an analytic field onto a grid (grid.sdfg)");
  flag(vox, "--field", "field", "field spec, e.g. sphere(0,0,0,0.5)");
  flag(vox, "--bbox", "bbox", "minx,miny,minz,maxx,maxy,maxz");
  flag(vox, "--dims", "dims", "N or nx,ny,nz");

  auto* ext = app.add_subcommand("extract-surface", "surface points (surface.ply, surface.spc1)");
  flag(ext, "--input", "input", "SDFG grid file");
  flag(ext, "--field", "field", "field spec, used when no input grid is given");
  flag(ext, "--bbox", "bbox", "minx,miny,minz,maxx,maxy,maxz");
  flag(ext, "--dims", "dims", "N or nx,ny,nz");

  auto* sim = app.add_subcommand("simulate", "drop a fixture body on the plane (trajectory.jsonl)");
  flag(sim, "--fixture", "fixture", "cube, tall-box, sphere or single-particle");

  auto* drop = app.add_subcommand("drop-test", "stability ratio over fixtures (drop_test.json)");
  flag(drop, "--objects", "objects", "comma list of fixture names");

  auto* grad = app.add_subcommand("gradcheck", "adjoint vs finite differences (gradcheck.json)");
  flag(grad, "--scenario", "scenario", "slide, single-particle or free-fall");
  flag(grad, "--horizon", "horizon", "steps; 0 keeps the scenario default");

  auto* samp = app.add_subcommand("sample-pixels", "uncertainty-guided pixel draws (samples.json)");
  flag(samp, "--image", "image", "grayscale PFM uncertainty image");
  flag(samp, "--fixture", "fixture", "fixture used when no image is given");

  auto* met = app.add_subcommand("metrics", "chamfer, F-score, normal consistency (metrics.json)");
  flag(met, "--pred", "pred", "predicted point cloud (PLY or SPC1)");
  flag(met, "--gt", "gt", "reference point cloud (PLY or SPC1)");
  flag(met, "--norm", "norm", "l1 or l2");
  flag(met, "--threshold", "threshold", "F-score threshold in metres");

  for (auto* sub : {vox, ext, sim, drop, grad, samp, met}) common(sub);

  auto* re = app.add_subcommand("rerun", "repeat a run from its manifest.json");
  re->add_option("manifest", manifest_path, "manifest.json of an earlier run")->required();
  re->add_option("--out", inv.out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("", e.what());
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "rerun")
      rerun(manifest_path, inv.out);
    else
      execute(command, resolve(inv), inv.out);
  } catch (const std::exception& e) {
    print_error(command, e.what());
    return 1;
  }
  return 0;
}
