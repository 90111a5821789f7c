// nfcalib: simulate | calibrate | refine | evaluate | ablate
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "nfcalib/nfcalib.hpp"

namespace fs = std::filesystem;
using namespace nfcalib;

namespace {

struct ExitError {
  int code;
  std::string stage;
  std::string kind;
  std::string message;
};

[[noreturn]] void fail(Stage stage, const std::string& kind, const std::string& message) {
  throw ExitError{static_cast<int>(stage), stage_name(stage), kind, message};
}

int report(const ExitError& e) {
  nlohmann::json j;
  j["error"] = {{"exit_code", e.code}, {"stage", e.stage}, {"kind", e.kind}, {"message", e.message}};
  std::cerr << j.dump() << std::endl;
  return e.code;
}

// Config file (flag or CALIB_CONFIG), then --set overrides, then --seed.
struct ConfigOptions {
  std::string path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", path, "key = value config file (default: $CALIB_CONFIG)");
    app->add_option("--set", sets, "override one config key, KEY=VALUE (repeatable)");
    app->add_option("--seed", seed, "override the config seed");
  }

  PipelineConfig load() const {
    std::string p = path;
    if (p.empty()) {
      if (const char* env = std::getenv("CALIB_CONFIG")) p = env;
    }
    try {
      KeyValues kv;
      if (!p.empty()) kv = parse_key_values(detail::read_file(p));
      for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
        const auto key = detail::trim(std::string_view(s).substr(0, eq));
        const auto value = detail::trim(std::string_view(s).substr(eq + 1));
        bool replaced = false;
        for (auto& [k, v] : kv) {
          if (k == key) {
            v = value;
            replaced = true;
          }
        }
        if (!replaced) kv.emplace_back(key, value);
      }
      auto cfg = apply_config(kv);
      if (seed) cfg.seed = *seed;
      return cfg;
    } catch (const Error& e) {
      fail(Stage::kUsage, e.kind(), e.what());
    }
  }
};

template <typename F>
auto io_step(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const IoError& e) {
    fail(Stage::kIo, e.kind(), e.what());
  } catch (const ValidationError& e) {
    fail(Stage::kIo, e.kind(), e.what());
  }
}

template <typename F>
auto pipeline_step(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError& e) {
    fail(e.stage(), e.cause(), e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  io_step([&] {
    detail::write_file(path, text);
    return 0;
  });
}

// ---------------------------------------------------------------------------

struct SimulateOptions {
  std::string out;
  int count = 1;
  bool clean = false;
  bool fixed_pose = false;
  bool no_ghosts = false;
  bool binary = false;
  std::optional<double> optical_noise, radar_jitter;
  std::optional<int> clutter;
};

void write_scene_dir(const fs::path& dir, const SceneSpec& spec, const TargetGeometry& geom, PlyFormat fmt) {
  SyntheticScene scene;
  EvalRender disk, plate;
  try {
    scene = render_target_scene(spec, geom);
    disk = render_eval_object(spec, EvalObject::kDisk);
    SceneSpec plate_spec = spec;
    plate_spec.target_pose = optical_axis_pose(spec.ground_truth_extrinsic, 0.30);
    plate = render_eval_object(plate_spec, EvalObject::kPlate);
  } catch (const Error& e) {
    fail(Stage::kUsage, e.kind(), e.what());
  }
  io_step([&] {
    fs::create_directories(dir);
    save_depth_capture(scene.capture, dir / "optical");
    save_radar_cloud(scene.radar, dir / "radar.ply", fmt);
    detail::write_file(dir / "ground_truth.json", ground_truth_json(spec, scene.truth).dump(2) + "\n");
    for (const auto& [name, r] : {std::pair<const char*, const EvalRender*>{"disk", &disk}, {"plate", &plate}}) {
      fs::create_directories(dir / name);
      save_depth_capture(r->capture, dir / name / "optical");
      save_radar_cloud(r->radar, dir / name / "radar.ply", fmt);
    }
    return 0;
  });
}

int cmd_simulate(const SimulateOptions& o, const PipelineConfig& cfg) {
  if (o.count < 1) fail(Stage::kUsage, "ConfigError", "--count must be at least 1");
  nlohmann::json summary = nlohmann::json::array();
  for (int i = 0; i < o.count; ++i) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
    SceneSpec spec;
    if (!o.fixed_pose) spec = random_scene_spec(seed);
    spec.seed = seed;
    if (o.clean) {
      spec.optical_noise = 0.0;
      spec.radar_jitter = 0.0;
      spec.blob_spread = 0.0;
      spec.clutter_count = 0;
      spec.styrofoam_scatter = 0;
      spec.multipath_ghosts = false;
    }
    if (o.optical_noise) spec.optical_noise = *o.optical_noise;
    if (o.radar_jitter) spec.radar_jitter = *o.radar_jitter;
    if (o.clutter) spec.clutter_count = *o.clutter;
    if (o.no_ghosts) spec.multipath_ghosts = false;
    const fs::path dir = o.count == 1 ? fs::path(o.out) : fs::path(o.out) / ("scene_" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%03d", i);
      return std::string(buf);
    }());
    write_scene_dir(dir, spec, cfg.geometry, o.binary ? PlyFormat::kBinaryLittleEndian : PlyFormat::kAscii);
    summary.push_back({{"dir", dir.generic_string()}, {"seed", seed}});
  }
  std::cout << nlohmann::json{{"scenes", summary}}.dump(2) << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------

struct InputOptions {
  std::string optical, radar, out, calib, report;
  bool json = false;
};

int cmd_calibrate(const InputOptions& o, const PipelineConfig& cfg) {
  const auto capture = io_step([&] { return load_depth_capture(o.optical); });
  const auto cloud = io_step([&] { return load_radar_cloud(o.radar); });
  const auto run = pipeline_step([&] { return calibrate(capture, cloud, cfg); });
  io_step([&] {
    save_calibration(run.calibration, o.out);
    return 0;
  });
  const std::string text = run_json(run).dump(2) + "\n";
  if (!o.report.empty()) write_text(o.report, text);
  std::cout << text;
  return 0;
}

int cmd_refine(const InputOptions& o, const PipelineConfig& cfg) {
  const auto initial = io_step([&] { return load_calibration(o.calib); });
  const auto capture = io_step([&] { return load_depth_capture(o.optical); });
  const auto cloud = io_step([&] { return load_radar_cloud(o.radar); });
  const auto res = pipeline_step([&] {
    return run_stage(Stage::kRegistration,
                     [&] { return refine_calibration(initial, capture, cloud, cfg.refine_params(), cfg.seed); });
  });
  io_step([&] {
    save_calibration(res.calibration, o.out);
    return 0;
  });
  nlohmann::json j{{"calibration", calibration_to_json(res.calibration)},
                   {"correspondences", res.correspondences},
                   {"inliers", res.inliers},
                   {"inlier_ratio", res.inlier_ratio},
                   {"rmse_initial", res.rmse_initial},
                   {"rmse_refined", res.rmse_refined},
                   {"change", {{"translation", extrinsic_error(res.calibration.transform, initial.transform).translation},
                               {"rotation_deg", extrinsic_error(res.calibration.transform, initial.transform).rotation_deg}}}};
  std::cout << j.dump(2) << std::endl;
  return 0;
}

int cmd_evaluate(const InputOptions& o, const PipelineConfig&) {
  const auto calib = io_step([&] { return load_calibration(o.calib); });
  const auto capture = io_step([&] { return load_depth_capture(o.optical); });
  const auto cloud = io_step([&] { return load_radar_cloud(o.radar); });
  const PointList optical = depth_to_points(capture);
  if (optical.empty()) fail(Stage::kOpticalDetection, "EmptyInput", "depth capture has no valid pixels");
  const PointList mapped = apply_transform(calib.transform, optical);
  const auto m = cloud_metrics(mapped, cloud.points);
  const auto residuals = residual_export(optical, cloud.points, calib);
  if (!o.out.empty()) {
    io_step([&] {
      write_ply(o.out, residuals.to_ply());
      return 0;
    });
  }
  nlohmann::json j{{"chamfer", m.chamfer},
                   {"rmse_optical_to_radar", m.rmse_optical_to_radar},
                   {"rmse_radar_to_optical", m.rmse_radar_to_optical},
                   {"inlier_fraction_2mm", m.inlier_fraction},
                   {"optical_points", m.optical_points},
                   {"radar_points", m.radar_points}};
  if (o.json) {
    std::cout << j.dump(2) << std::endl;
    return 0;
  }
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << "metric                      value\n";
  os << "chamfer [mm]                " << 1e3 * m.chamfer << "\n";
  os << "rmse optical->radar [mm]    " << 1e3 * m.rmse_optical_to_radar << "\n";
  os << "rmse radar->optical [mm]    " << 1e3 * m.rmse_radar_to_optical << "\n";
  os << "radar within 2 mm           " << m.inlier_fraction << "\n";
  os << "points optical / radar      " << m.optical_points << " / " << m.radar_points << "\n";
  std::cout << os.str();
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_ablate(const std::string& scenes, const std::string& out, const PipelineConfig& cfg) {
  std::vector<fs::path> dirs;
  std::error_code ec;
  if (!fs::is_directory(scenes, ec)) fail(Stage::kUsage, "MissingFile", "scene directory '" + scenes + "' not found");
  if (fs::exists(fs::path(scenes) / "ground_truth.json")) {
    dirs.push_back(scenes);
  } else {
    for (const auto& e : fs::directory_iterator(scenes)) {
      if (e.is_directory() && fs::exists(e.path() / "ground_truth.json")) dirs.push_back(e.path());
    }
  }
  if (dirs.empty()) fail(Stage::kUsage, "EmptyInput", "no scenes with ground_truth.json under '" + scenes + "'");
  std::sort(dirs.begin(), dirs.end());

  std::vector<std::string> names;
  std::vector<std::array<VariantOutcome, 3>> results;
  for (const auto& d : dirs) {
    const auto truth = io_step([&] {
      try {
        return ground_truth_extrinsic(nlohmann::json::parse(detail::read_file(d / "ground_truth.json")));
      } catch (const nlohmann::json::exception& e) {
        throw MalformedInput(std::string("ground truth: ") + e.what());
      }
    });
    const auto capture = io_step([&] { return load_depth_capture(d / "optical"); });
    const auto cloud = io_step([&] { return load_radar_cloud(d / "radar.ply"); });
    names.push_back(d.filename().string());
    results.push_back(ablate_scene(capture, cloud, cfg, truth));
  }
  const std::string csv = ablation_csv(names, results);
  write_text(out, csv);
  nlohmann::json j = nlohmann::json::array();
  for (int v = 0; v < 3; ++v) {
    std::vector<VariantOutcome> rows;
    for (const auto& r : results) rows.push_back(r[v]);
    const auto s = summarize_variant(rows);
    j.push_back({{"variant", variant_name(static_cast<EnergyVariant>(v))},
                 {"scenes", s.scenes},
                 {"failures", s.failures},
                 {"median_translation", s.median_translation},
                 {"mean_translation", s.mean_translation},
                 {"median_rotation_deg", s.median_rotation_deg},
                 {"mean_rotation_deg", s.mean_rotation_deg}});
  }
  std::cout << nlohmann::json{{"ablation", j}}.dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Near-field RGB-D / MIMO radar extrinsic calibration"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "expand help for every subcommand");

  ConfigOptions cfg_opts;
  auto* sim = app.add_subcommand("simulate", "render synthetic target scenes with ground truth");
  auto* cal = app.add_subcommand("calibrate", "single-shot calibration from one target capture");
  auto* ref = app.add_subcommand("refine", "refine a calibration on a planar plate capture");
  auto* eva = app.add_subcommand("evaluate", "Chamfer and RMSE of a calibration on an object capture");
  auto* abl = app.add_subcommand("ablate", "energy-term ablation over a directory of simulated scenes");
  for (auto* s : {sim, cal, ref, eva, abl}) cfg_opts.attach(s);

  SimulateOptions so;
  sim->add_option("--out", so.out, "output directory")->required();
  sim->add_option("--count", so.count, "number of scenes; more than one writes scene_NNN subdirectories");
  sim->add_flag("--clean", so.clean, "no noise, clutter, scatter or multipath");
  sim->add_flag("--fixed-pose", so.fixed_pose, "target straight ahead at 0.35 m instead of a seeded random pose");
  sim->add_flag("--no-ghosts", so.no_ghosts, "disable multipath ghost returns");
  sim->add_flag("--binary", so.binary, "write binary little-endian PLY");
  sim->add_option("--optical-noise", so.optical_noise, "depth noise sigma at 0.3 m [m]");
  sim->add_option("--radar-jitter", so.radar_jitter, "radar ball center jitter sigma [m]");
  sim->add_option("--clutter", so.clutter, "number of clutter scatterer groups");

  InputOptions io;
  cal->add_option("--optical", io.optical, "depth capture bundle directory")->required();
  cal->add_option("--radar", io.radar, "radar point cloud (PLY)")->required();
  cal->add_option("--out", io.out, "calibration output path (a .json mirror is written alongside)")->required();
  cal->add_option("--report", io.report, "also write the JSON report here");

  ref->add_option("--calib", io.calib, "initial calibration")->required();
  ref->add_option("--optical", io.optical, "plate depth capture bundle")->required();
  ref->add_option("--radar", io.radar, "plate radar point cloud")->required();
  ref->add_option("--out", io.out, "refined calibration output path")->required();

  eva->add_option("--calib", io.calib, "calibration to evaluate")->required();
  eva->add_option("--optical", io.optical, "object depth capture bundle")->required();
  eva->add_option("--radar", io.radar, "object radar point cloud")->required();
  eva->add_option("--out", io.out, "residual PLY output");
  eva->add_flag("--json", io.json, "print JSON instead of the table");

  std::string scenes, csv;
  abl->add_option("--scenes", scenes, "directory of scenes written by simulate")->required();
  abl->add_option("--out", csv, "CSV output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report({2, stage_name(Stage::kUsage), "UsageError", e.what()});
  }

  try {
    const PipelineConfig cfg = cfg_opts.load();
    if (sim->parsed()) return cmd_simulate(so, cfg);
    if (cal->parsed()) return cmd_calibrate(io, cfg);
    if (ref->parsed()) return cmd_refine(io, cfg);
    if (eva->parsed()) return cmd_evaluate(io, cfg);
    if (abl->parsed()) return cmd_ablate(scenes, csv, cfg);
  } catch (const ExitError& e) {
    return report(e);
  } catch (const Error& e) {
    return report({static_cast<int>(Stage::kIo), stage_name(Stage::kIo), e.kind(), e.what()});
  } catch (const std::exception& e) {
    return report({static_cast<int>(Stage::kIo), stage_name(Stage::kIo), "std::exception", e.what()});
  }
  return 2;
}
