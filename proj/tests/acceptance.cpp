// End-to-end acceptance checks on the synthetic suite. One PASS/FAIL line per
// criterion; exit status is nonzero if any line fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "nfcalib/nfcalib.hpp"

using namespace nfcalib;

namespace {

using Clock = std::chrono::steady_clock;

int g_failures = 0;

void report(int id, bool ok, const std::string& what) {
  std::printf("%s [%d] %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) { return median_of(std::move(v)); }

SceneSpec clean_spec() {
  SceneSpec s;
  s.optical_noise = 0.0;
  s.radar_jitter = 0.0;
  s.blob_spread = 0.0;
  s.clutter_count = 0;
  s.styrofoam_scatter = 0;
  s.multipath_ghosts = false;
  return s;
}

double disk_chamfer(const SceneSpec& spec, const RigidTransform& calib) {
  const auto disk = render_eval_object(spec, EvalObject::kDisk);
  return chamfer_distance(apply_transform(calib, depth_to_points(disk.capture)), disk.radar.points);
}

// ---------------------------------------------------------------- 1

void clean_scene() {
  const auto t0 = Clock::now();
  const PipelineConfig cfg;
  const auto spec = clean_spec();
  const auto scene = render_target_scene(spec, cfg.geometry);
  const auto run = calibrate(scene.capture, scene.radar, cfg);
  const auto e = extrinsic_error(run.calibration.transform, spec.ground_truth_extrinsic);
  const double energy = run.radar.target.energy.total;
  const double dt = seconds_since(t0);
  report(1, e.translation <= 1e-4 && e.rotation_deg <= 0.02 && energy < 1e-9 && dt < 5.0,
         fmt("clean scene: translation %.4f mm (<= 0.1), rotation %.5f deg (<= 0.02), E %.2e (< 1e-9), %.2f s (< 5)",
             1e3 * e.translation, e.rotation_deg, energy, dt));
}

// ---------------------------------------------------------------- 2

void suite_accuracy() {
  const auto t0 = Clock::now();
  const PipelineConfig cfg;
  std::vector<double> trans, chamfer;
  int failures = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto spec = random_scene_spec(seed);
    const auto scene = render_target_scene(spec, cfg.geometry);
    try {
      const auto run = calibrate(scene.capture, scene.radar, cfg);
      trans.push_back(extrinsic_error(run.calibration.transform, spec.ground_truth_extrinsic).translation);
      chamfer.push_back(disk_chamfer(spec, run.calibration.transform));
    } catch (const StageError&) {
      // a failed scene counts as an unbounded error
      ++failures;
      trans.push_back(std::numeric_limits<double>::infinity());
      chamfer.push_back(std::numeric_limits<double>::infinity());
    }
  }
  const double mt = median(trans), mc = median(chamfer), dt = seconds_since(t0);
  report(2, mt <= 2e-3 && mc <= 2.5e-3 && dt < 300.0,
         fmt("40 scenes, sigma 2 mm: median translation %.3f mm (<= 2), median disk Chamfer %.3f mm (<= 2.5), "
             "%d failed, %.1f s (< 300)",
             1e3 * mt, 1e3 * mc, failures, dt));
}

// ---------------------------------------------------------------- 3

void repeatability() {
  PipelineConfig cfg;
  const auto spec = random_scene_spec(7);
  const auto scene = render_target_scene(spec, cfg.geometry);
  std::vector<RigidTransform> est;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    cfg.seed = s;
    est.push_back(calibrate(scene.capture, scene.radar, cfg).calibration.transform);
  }
  Vec3 mean_t = Vec3::Zero();
  Mat3 sum_r = Mat3::Zero();
  for (const auto& t : est) {
    mean_t += t.translation / 20.0;
    sum_r += t.rotation;
  }
  // chordal mean rotation
  Eigen::JacobiSVD<Mat3> svd(sum_r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 mean_r = svd.matrixU() * svd.matrixV().transpose();
  if (mean_r.determinant() < 0) {
    Mat3 d = Mat3::Identity();
    d(2, 2) = -1;
    mean_r = svd.matrixU() * d * svd.matrixV().transpose();
  }
  double st = 0.0, sr = 0.0;
  for (const auto& t : est) {
    st += (t.translation - mean_t).squaredNorm();
    sr += std::pow(rotation_angle_deg(t.rotation, mean_r), 2);
  }
  st = std::sqrt(st / 19.0);
  sr = std::sqrt(sr / 19.0);
  report(3, sr <= 0.01 && st <= 3e-4,
         fmt("20 RANSAC seeds on one scene: std rotation %.5f deg (<= 0.01), std translation %.4f mm (<= 0.3)", sr,
             1e3 * st));
}

// ---------------------------------------------------------------- 4

void ablation() {
  const PipelineConfig cfg;
  std::array<std::vector<double>, 3> err;
  std::array<int, 3> failed{};
  for (std::uint64_t seed = 101; seed <= 120; ++seed) {
    const auto spec = random_scene_spec(seed);
    const auto scene = render_target_scene(spec, cfg.geometry);
    const auto out = ablate_scene(scene.capture, scene.radar, cfg, spec.ground_truth_extrinsic);
    for (int v = 0; v < 3; ++v) {
      failed[v] += !out[v].ok;
      err[v].push_back(out[v].ok ? out[v].error.translation : std::numeric_limits<double>::infinity());
    }
  }
  const double d = median(err[0]), s = median(err[1]), f = median(err[2]);
  const bool ok = d > s && s > f && (d - s) > (s - f);
  report(4, ok,
         fmt("ablation over 20 cluttered scenes: median translation data %.2f mm > +sphere %.2f mm > full %.2f mm, "
             "first gap %.2f mm > second gap %.2f mm (failures %d/%d/%d)",
             1e3 * d, 1e3 * s, 1e3 * f, 1e3 * (d - s), 1e3 * (s - f), failed[0], failed[1], failed[2]));
}

// ---------------------------------------------------------------- 5

void robust_selection() {
  const PipelineConfig cfg;
  int correct = 0, brighter = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    spec.clutter_count = 15;
    const auto radar = render_radar_cloud(spec, cfg.geometry);
    const auto truth = target_truth(spec, cfg.geometry);
    double ball_min = std::numeric_limits<double>::infinity(), clutter_max = 0.0;
    for (std::size_t i = 0; i < radar.labels.size(); ++i) {
      if (radar.labels[i] <= 4) ball_min = std::min(ball_min, radar.cloud.confidence[i]);
      if (radar.labels[i] == 6) clutter_max = std::max(clutter_max, radar.cloud.confidence[i]);
    }
    brighter += clutter_max > ball_min;
    try {
      const auto r = run_radar(radar.cloud, cfg);
      bool ok = (r.target.anchor - truth.anchor_radar).norm() < 5e-3;
      for (int i = 0; i < 4; ++i) ok = ok && (r.target.corners[i] - truth.corner_balls_radar[i]).norm() < 5e-3;
      correct += ok;
    } catch (const StageError&) {
    }
  }
  report(5, correct >= 95 && brighter > 0,
         fmt("15 clutter clusters: true 5-ball subset in %d/100 trials (>= 95), clutter outshines a ball in %d", correct,
             brighter));
}

// ---------------------------------------------------------------- 6

double brute_directed(const PointList& a, const PointList& b) {
  double ss = 0.0;
  for (const auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) best = std::min(best, (p - q).squaredNorm());
    ss += best;
  }
  return std::sqrt(ss / static_cast<double>(a.size()));
}

RigidTransform random_rigid(Rng& rng) {
  std::normal_distribution<double> g;
  RigidTransform t;
  t.rotation = Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized().toRotationMatrix();
  t.translation = Vec3(g(rng), g(rng), g(rng));
  return t;
}

void oracles() {
  Rng rng(606);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  std::uniform_int_distribution<int> n(1, 1000);
  auto cloud = [&](int k) {
    PointList p;
    for (int i = 0; i < k; ++i) p.emplace_back(u(rng), u(rng), u(rng));
    return p;
  };
  double metric_dev = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto a = cloud(n(rng)), b = cloud(n(rng));
    const double ab = brute_directed(a, b), ba = brute_directed(b, a);
    metric_dev = std::max({metric_dev, std::abs(directed_rmse(a, b) - ab), std::abs(directed_rmse(b, a) - ba),
                           std::abs(chamfer_distance(a, b) - 0.5 * (ab + ba))});
  }
  double kabsch_dev = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto t = random_rigid(rng);
    const auto o = cloud(4);
    const auto c = kabsch_register(o, apply_transform(t, o), 1.0);
    kabsch_dev = std::max({kabsch_dev, (c.transform.rotation - t.rotation).cwiseAbs().maxCoeff(),
                           (c.transform.translation - t.translation).cwiseAbs().maxCoeff()});
  }
  double sphere_dev = 0.0;
  const double r = TargetGeometry{}.styrofoam_radius;
  for (int i = 0; i < 20; ++i) {
    const Point3 c(u(rng), u(rng), 0.3 + u(rng));
    PointList pts;
    for (const auto& d : synth::fibonacci_sphere(400)) {
      if (d.z() < 0.0) pts.push_back(c + r * d);
    }
    const std::vector<double> w(pts.size(), 1.0);
    const auto fit = fit_sphere_center(pts, w, r);
    sphere_dev = std::max(sphere_dev, fit ? (*fit - c).norm() : std::numeric_limits<double>::infinity());
  }
  report(6, metric_dev <= 1e-12 && kabsch_dev <= 1e-9 && sphere_dev <= 1e-6,
         fmt("oracles: metrics vs brute force %.1e (<= 1e-12), Kabsch %.1e (<= 1e-9), sphere center %.1e m (<= 1e-6)",
             metric_dev, kabsch_dev, sphere_dev));
}

// ---------------------------------------------------------------- 7

RigidCalibration as_calibration(const RigidTransform& t) {
  RigidCalibration c;
  c.transform = t;
  return c;
}

SceneSpec plate_spec(SceneSpec spec) {
  spec.target_pose = optical_axis_pose(spec.ground_truth_extrinsic, 0.30);
  return spec;
}

void refinement() {
  const PipelineConfig cfg;

  // fixed point: exact initialization on a noise-free plate
  auto fixed_spec = plate_spec(SceneSpec{});
  fixed_spec.optical_noise = 0.0;
  const auto gt = fixed_spec.ground_truth_extrinsic;
  const auto fixed = render_eval_object(fixed_spec, EvalObject::kPlate);
  const auto fr = refine_calibration(as_calibration(gt), fixed.capture, fixed.radar, cfg.refine_params(), cfg.seed);
  const double moved = (fr.calibration.transform.translation - gt.translation).norm();

  // basin: 5 mm along the plate normal and 1 degree about an in-plane axis through the plate
  const auto basin_spec = plate_spec(SceneSpec{});
  const auto basin = render_eval_object(basin_spec, EvalObject::kPlate);
  const Point3 p = basin_spec.target_pose.translation;
  const Vec3 normal = basin_spec.target_pose.rotation.col(2);
  RigidTransform d;
  d.rotation = Eigen::AngleAxisd(std::numbers::pi / 180.0, basin_spec.target_pose.rotation.col(0)).toRotationMatrix();
  d.translation = p - d.rotation * p + 0.005 * normal;
  const auto pert = compose(d, gt);
  const auto br = refine_calibration(as_calibration(pert), basin.capture, basin.radar, cfg.refine_params(), cfg.seed);
  const auto be = extrinsic_error(br.calibration.transform, gt);

  // no degradation from a good single-shot initialization
  double worst = -std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto spec = random_scene_spec(seed);
    const auto scene = render_target_scene(spec, cfg.geometry);
    const auto init = calibrate(scene.capture, scene.radar, cfg).calibration;
    const auto ps = plate_spec(spec);
    const auto plate = render_eval_object(ps, EvalObject::kPlate);
    const auto rr = refine_calibration(init, plate.capture, plate.radar, cfg.refine_params(), cfg.seed);
    const double before = extrinsic_error(init.transform, spec.ground_truth_extrinsic).translation;
    const double after = extrinsic_error(rr.calibration.transform, spec.ground_truth_extrinsic).translation;
    worst = std::max(worst, after - before);
  }
  report(7, moved < 1e-4 && be.translation <= 1e-3 && be.rotation_deg <= 0.2 && worst <= 3e-4,
         fmt("refinement: fixed point moves %.4f mm (< 0.1); from 5 mm / 1 deg returns to %.3f mm / %.3f deg "
             "(<= 1 / 0.2); worst change over 20 scenes %+.3f mm (<= 0.3)",
             1e3 * moved, 1e3 * be.translation, be.rotation_deg, 1e3 * worst));
}

// ---------------------------------------------------------------- 8

template <typename F>
int fuzz(const std::string& seed_input, int count, std::uint64_t seed, int& untyped, F&& parse) {
  Rng rng(seed);
  int runs = 0;
  for (int i = 0; i < count; ++i, ++runs) {
    std::string s = seed_input;
    const int edits = 1 + static_cast<int>(rng() % 8);
    for (int e = 0; e < edits && !s.empty(); ++e) {
      const std::size_t at = rng() % s.size();
      switch (rng() % 4) {
        case 0: s[at] = static_cast<char>(rng() & 0xff); break;
        case 1: s.erase(at, 1 + rng() % 8); break;
        case 2: s.insert(at, 1, "0123456789 -.e\n"[rng() % 15]); break;
        default: s.resize(at); break;
      }
    }
    try {
      parse(s);
    } catch (const Error&) {
    } catch (...) {
      ++untyped;
    }
  }
  return runs;
}

void determinism_and_fuzz() {
  const PipelineConfig cfg;
  const auto spec = random_scene_spec(11);
  const auto a = render_target_scene(spec, cfg.geometry);
  const auto b = render_target_scene(spec, cfg.geometry);
  const bool same_scene = encode_depth(a.capture) == encode_depth(b.capture) &&
                          encode_ply(radar_cloud_to_ply(a.radar)) == encode_ply(radar_cloud_to_ply(b.radar));
  const auto ja = run_json(calibrate(a.capture, a.radar, cfg)).dump(2);
  const auto jb = run_json(calibrate(b.capture, b.radar, cfg)).dump(2);
  std::vector<std::string> names = {"s11"};
  const auto ca = ablation_csv(names, {ablate_scene(a.capture, a.radar, cfg, spec.ground_truth_extrinsic)});
  const auto cb = ablation_csv(names, {ablate_scene(b.capture, b.radar, cfg, spec.ground_truth_extrinsic)});
  const bool same = same_scene && ja == jb && ca == cb;

  int untyped = 0, runs = 0;
  const auto small = render_target_scene(clean_spec(), cfg.geometry);
  RigidCalibration calib;
  calib.transform = spec.ground_truth_extrinsic;
  RadarCloud cloud;
  for (std::size_t i = 0; i < 40 && i < small.radar.size(); ++i) {
    cloud.points.push_back(small.radar.points[i]);
    cloud.confidence.push_back(small.radar.confidence[i]);
    cloud.amplitude_db.push_back(small.radar.amplitude_db[i]);
  }
  DepthCapture cap(8, 6, CameraIntrinsics{});
  std::fill(cap.depth.begin(), cap.depth.end(), 0.3f);
  runs += fuzz(encode_depth(cap), 2500, 81, untyped, [](const std::string& s) { decode_depth(s); });
  runs += fuzz(encode_ply(radar_cloud_to_ply(cloud)), 2500, 82, untyped,
               [](const std::string& s) { radar_cloud_from_ply(decode_ply(s)); });
  runs += fuzz(encode_ply(radar_cloud_to_ply(cloud), PlyFormat::kBinaryLittleEndian), 2500, 83, untyped,
               [](const std::string& s) { radar_cloud_from_ply(decode_ply(s)); });
  runs += fuzz(encode_calibration(calib), 2500, 84, untyped, [](const std::string& s) { decode_calibration(s); });
  runs += fuzz(config_to_text(cfg), 2500, 85, untyped, [](const std::string& s) { parse_config(s); });
  runs += fuzz(encode_ppm(2, 2, std::vector<Rgb>(4)), 500, 86, untyped, [](const std::string& s) {
    int w, h;
    std::vector<Rgb> rgb;
    decode_ppm(s, w, h, rgb);
  });
  report(8, same && runs >= 10000 && untyped == 0,
         fmt("determinism: scene, report and CSV bytes %s; fuzzing %d mutated inputs, %d untyped errors",
             same ? "identical" : "DIFFER", runs, untyped));
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<void()>>> checks = {
      {1, clean_scene}, {2, suite_accuracy}, {3, repeatability},       {4, ablation},
      {5, robust_selection}, {6, oracles},   {7, refinement},          {8, determinism_and_fuzz}};
  for (const auto& [id, check] : checks) {
    try {
      check();
    } catch (const std::exception& e) {
      report(id, false, fmt("threw %s", e.what()));
    }
  }
  std::printf("%d of 8 criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
