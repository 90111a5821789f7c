#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nfcalib/errors.hpp"
#include "nfcalib/geometry.hpp"
#include "nfcalib/io.hpp"
#include "nfcalib/ransac.hpp"
#include "nfcalib/target.hpp"

namespace nfcalib {

struct Box {
  Point3 lo = Point3::Zero();
  Point3 hi = Point3::Zero();

  bool valid() const { return lo.allFinite() && hi.allFinite() && (hi - lo).minCoeff() > 0.0; }
  bool contains(const Point3& p) const { return (p - lo).minCoeff() >= 0.0 && (hi - p).minCoeff() >= 0.0; }
};

// Deterministic scene description. Poses map into the radar frame.
struct SceneSpec {
  RigidTransform target_pose = default_target_pose();
  RigidTransform ground_truth_extrinsic = default_extrinsic();

  // optical depth noise: sigma at reference depth, linear in depth, inflated at grazing angles
  double optical_noise = 0.002;
  double optical_noise_ref_depth = 0.3;
  double grazing_floor = 0.2;

  // radar: per-ball center jitter, blob layout
  double radar_jitter = 0.0001;
  double blob_spread = 0.0005;
  int blob_points = 12;
  // board multipath: each corner ball also shows up on the board plane
  // (single bounce) and mirrored behind it (double bounce)
  bool multipath_ghosts = true;
  double ghost_loss_db = 1.0;  // extra attenuation per bounce
  int styrofoam_scatter = 12;  // front-surface points per styrofoam sphere
  int clutter_count = 15;      // clutter scatterer groups
  Box clutter_volume{Point3(-0.15, -0.15, 0.22), Point3(0.15, 0.15, 0.60)};
  double clutter_clearance = 0.03;  // minimum distance of clutter from any ball

  std::uint64_t seed = 1;

  int width = 640;
  int height = 576;
  CameraIntrinsics intrinsics{};
  std::vector<Rgb> palette = default_palette();
  double board_half_size = 0.08;

  static RigidTransform default_extrinsic() {
    RigidTransform t;
    t.rotation = rotation_xyz_deg(2.0, -3.0, 1.5);
    t.translation = Vec3(0.06, -0.08, -0.03);
    return t;
  }
  static RigidTransform default_target_pose() {
    RigidTransform t;
    t.translation = Vec3(0.0, 0.0, 0.35);
    return t;
  }
  static std::vector<Rgb> default_palette() {
    return {Rgb{220, 40, 40}, Rgb{40, 170, 60}, Rgb{40, 80, 220}, Rgb{230, 200, 30}};
  }

  void validate() const {
    target_pose.validate();
    ground_truth_extrinsic.validate();
    if (!(optical_noise >= 0.0) || !(radar_jitter >= 0.0) || !(blob_spread >= 0.0)) {
      throw ValidationError("noise parameters must be non-negative");
    }
    if (clutter_count < 0 || blob_points < 1 || styrofoam_scatter < 0) throw ValidationError("invalid counts");
    if (clutter_count > 0 && !clutter_volume.valid()) throw ValidationError("clutter volume is degenerate");
    if (palette.size() < 4) throw ValidationError("palette needs four sphere colors");
    intrinsics.validate();
  }
};

// Ground-truth positions emitted with every target scene.
struct TargetTruth {
  std::array<Point3, 4> corner_balls_radar;  // ordered, radar frame
  Point3 anchor_radar = Point3::Zero();
  std::array<Point3, 4> sphere_centers_optical;
  RigidTransform extrinsic;
};

namespace synth {

// ---------------------------------------------------------------------------
// Primitives and ray casting
// ---------------------------------------------------------------------------

struct SpherePrim {
  Point3 center;
  double radius;
  Rgb color;
};

enum class PatchShape { kRectangle, kDisk, kPolygon };

// Flat patch with an in-plane frame (axis_u, axis_v) and normal axis_u x axis_v.
struct PatchPrim {
  Point3 origin;
  Vec3 axis_u, axis_v;
  PatchShape shape = PatchShape::kRectangle;
  double half_u = 0.0, half_v = 0.0, radius = 0.0;
  std::vector<Eigen::Vector2d> polygon;
  Rgb color{180, 180, 180};

  Vec3 normal() const { return axis_u.cross(axis_v).normalized(); }

  bool inside(double a, double b) const {
    switch (shape) {
      case PatchShape::kRectangle:
        return std::abs(a) <= half_u && std::abs(b) <= half_v;
      case PatchShape::kDisk:
        return a * a + b * b <= radius * radius;
      case PatchShape::kPolygon: {
        bool in = false;
        for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
          const auto& p = polygon[i];
          const auto& q = polygon[j];
          if ((p.y() > b) != (q.y() > b) && a < (q.x() - p.x()) * (b - p.y()) / (q.y() - p.y()) + p.x()) in = !in;
        }
        return in;
      }
    }
    return false;
  }
};

struct World {
  std::vector<SpherePrim> spheres;
  std::vector<PatchPrim> patches;
};

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal = Vec3::Zero();
  Rgb color{};
  bool found() const { return std::isfinite(t); }
};

inline void intersect(const SpherePrim& s, const Vec3& d, Hit& hit) {
  // ray from the origin: |t d - c|^2 = r^2
  const double a = d.squaredNorm();
  const double b = d.dot(s.center);
  const double c = s.center.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - a * c;
  if (disc < 0.0) return;
  const double t = (b - std::sqrt(disc)) / a;
  if (t > 0.0 && t < hit.t) {
    hit.t = t;
    hit.normal = (t * d - s.center) / s.radius;
    hit.color = s.color;
  }
}

inline void intersect(const PatchPrim& p, const Vec3& d, Hit& hit) {
  const Vec3 n = p.normal();
  const double den = d.dot(n);
  if (std::abs(den) < 1e-12) return;
  const double t = p.origin.dot(n) / den;
  if (!(t > 0.0) || t >= hit.t) return;
  const Vec3 q = t * d - p.origin;
  if (!p.inside(q.dot(p.axis_u), q.dot(p.axis_v))) return;
  hit.t = t;
  hit.normal = den < 0.0 ? n : Vec3(-n);
  hit.color = p.color;
}

inline Hit cast(const World& w, const Vec3& d) {
  Hit hit;
  for (const auto& s : w.spheres) intersect(s, d, hit);
  for (const auto& p : w.patches) intersect(p, d, hit);
  return hit;
}

// Per-pixel texture offset, stable under the seed.
inline int speckle(std::uint64_t seed, int u, int v) {
  const std::uint64_t h = derive_seed(seed, (static_cast<std::uint64_t>(v) << 32) | static_cast<std::uint32_t>(u));
  return static_cast<int>(h % 41) - 20;
}

struct OpticalNoise {
  double sigma = 0.0;
  double ref_depth = 0.3;
  double grazing_floor = 0.2;
};

/// Pinhole ray casting through pixel centers at integer coordinates, so a
/// noiseless pixel back-projects exactly onto the surface. Misses are invalid
/// (depth 0) and dark.
inline DepthCapture render(const World& world, const CameraIntrinsics& k, int width, int height,
                           const OpticalNoise& noise, std::uint64_t seed) {
  DepthCapture cap(width, height, k);
  Rng rng(derive_seed(seed, 101));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const Vec3 d((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      const Hit hit = cast(world, d);
      const std::size_t i = cap.index(u, v);
      if (!hit.found()) {
        cap.rgb[i] = Rgb{25, 25, 30};
        continue;
      }
      double z = hit.t;  // d.z == 1
      if (noise.sigma > 0.0) {
        const double cos_theta = std::abs(hit.normal.dot(d.normalized()));
        const double sigma = noise.sigma * (z / noise.ref_depth) / std::max(noise.grazing_floor, cos_theta);
        z += sigma * gauss(rng);
      }
      cap.depth[i] = z > 0.0 ? static_cast<float>(z) : 0.f;
      const int s = speckle(seed, u, v);
      for (int c = 0; c < 3; ++c) cap.rgb[i][c] = static_cast<std::uint8_t>(std::clamp(hit.color[c] + s, 0, 255));
    }
  }
  return cap;
}

inline PatchPrim transformed(PatchPrim p, const RigidTransform& T) {
  p.origin = apply_transform(T, p.origin);
  p.axis_u = T.rotation * p.axis_u;
  p.axis_v = T.rotation * p.axis_v;
  return p;
}

inline World transformed(const World& w, const RigidTransform& T) {
  World out;
  for (auto s : w.spheres) {
    s.center = apply_transform(T, s.center);
    s.radius *= T.scale;
    out.spheres.push_back(s);
  }
  for (const auto& p : w.patches) out.patches.push_back(transformed(p, T));
  return out;
}

// ---------------------------------------------------------------------------
// Radar sampling helpers
// ---------------------------------------------------------------------------

struct RadarSamples {
  PointList points;
  std::vector<double> amplitude_db;  // relative to the ball reference level
  std::vector<int> label;

  void add(const Point3& p, double db, int l) {
    points.push_back(p);
    amplitude_db.push_back(db);
    label.push_back(l);
  }

  RadarCloud to_cloud() const {
    std::vector<double> amp;
    amp.reserve(amplitude_db.size());
    for (double db : amplitude_db) amp.push_back(std::pow(10.0, db / 20.0));
    return RadarCloud::from_amplitudes(points, amp);
  }
};

// Grid samples over a patch, spacing in meters, optional isotropic jitter.
inline void sample_patch(const PatchPrim& p, double spacing, double jitter, Rng& rng, RadarSamples& out, int label,
                         double db = 0.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  const double ext = p.shape == PatchShape::kDisk ? p.radius : std::max(p.half_u, p.half_v);
  double ext_u = ext, ext_v = ext;
  if (p.shape == PatchShape::kPolygon) {
    ext_u = ext_v = 0.0;
    for (const auto& q : p.polygon) {
      ext_u = std::max(ext_u, std::abs(q.x()));
      ext_v = std::max(ext_v, std::abs(q.y()));
    }
  }
  const int nu = static_cast<int>(std::floor(ext_u / spacing));
  const int nv = static_cast<int>(std::floor(ext_v / spacing));
  for (int j = -nv; j <= nv; ++j) {
    for (int i = -nu; i <= nu; ++i) {
      const double a = i * spacing, b = j * spacing;
      if (!p.inside(a, b)) continue;
      Point3 q = p.origin + a * p.axis_u + b * p.axis_v;
      if (jitter > 0.0) q += jitter * Vec3(g(rng), g(rng), g(rng));
      out.add(q, db, label);
    }
  }
}

// Roughly uniform points on a sphere (golden-angle spiral).
inline PointList fibonacci_sphere(int n) {
  PointList out;
  const double ga = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    out.emplace_back(r * std::cos(ga * i), y, r * std::sin(ga * i));
  }
  return out;
}

}  // namespace synth

// ---------------------------------------------------------------------------
// Target scene
// ---------------------------------------------------------------------------

// Radar point labels.
enum RadarLabel : int { kLabelCornerBall = 0, kLabelAnchorBall = 4, kLabelStyrofoam = 5, kLabelClutter = 6, kLabelObject = 7,
                       kLabelGhost = 8 };

struct SyntheticScene {
  DepthCapture capture;
  RadarCloud radar;
  std::vector<int> radar_labels;  // 0..3 corner ball, 4 anchor, 5 styrofoam, 6 clutter, 7 object, 8 ghost
  TargetTruth truth;
};

namespace synth {

inline World target_world(const SceneSpec& spec, const TargetGeometry& geom, const RigidTransform& target_to_frame) {
  World w;
  const auto corners = geom.corner_positions();
  for (int i = 0; i < 4; ++i) {
    w.spheres.push_back({apply_transform(target_to_frame, corners[i]), geom.styrofoam_radius * target_to_frame.scale,
                         spec.palette[static_cast<std::size_t>(i) % spec.palette.size()]});
  }
  PatchPrim board;
  board.origin = Point3(0, 0, geom.board_offset);
  board.axis_u = Vec3::UnitX();
  board.axis_v = Vec3::UnitY();
  board.half_u = board.half_v = spec.board_half_size;
  board.color = Rgb{200, 200, 195};
  w.patches.push_back(transformed(board, target_to_frame));
  return w;
}

}  // namespace synth

inline TargetTruth target_truth(const SceneSpec& spec, const TargetGeometry& geom) {
  TargetTruth t;
  const auto corners = geom.corner_positions();
  const RigidTransform target_to_optical = compose(invert(spec.ground_truth_extrinsic), spec.target_pose);
  for (int i = 0; i < 4; ++i) {
    t.corner_balls_radar[i] = apply_transform(spec.target_pose, corners[i]);
    t.sphere_centers_optical[i] = apply_transform(target_to_optical, corners[i]);
  }
  t.anchor_radar = apply_transform(spec.target_pose, geom.anchor_position());
  t.extrinsic = spec.ground_truth_extrinsic;
  return t;
}

/// Ray-cast optical capture of the four spheres and the board.
inline DepthCapture render_depth_capture(const SceneSpec& spec, const TargetGeometry& geom) {
  spec.validate();
  geom.validate();
  const auto truth = target_truth(spec, geom);
  for (const auto& c : truth.sphere_centers_optical) {
    if (c.z() <= geom.styrofoam_radius) throw SceneError("target sphere behind the optical sensor");
    const auto px = spec.intrinsics.project(c);
    const double rad = spec.intrinsics.fx * geom.styrofoam_radius / c.z();
    if (px.x() - rad < 0 || px.y() - rad < 0 || px.x() + rad > spec.width - 1 || px.y() + rad > spec.height - 1) {
      throw SceneError("target sphere outside the optical frustum");
    }
  }
  const RigidTransform target_to_optical = compose(invert(spec.ground_truth_extrinsic), spec.target_pose);
  const auto world = synth::target_world(spec, geom, target_to_optical);
  return synth::render(world, spec.intrinsics, spec.width, spec.height,
                       {spec.optical_noise, spec.optical_noise_ref_depth, spec.grazing_floor}, spec.seed);
}

struct RadarRender {
  RadarCloud cloud;
  std::vector<int> labels;
};

/// Radar returns of the target: a tight bright blob per steel ball, weaker
/// ghost blobs from board multipath, scatter on the sensor-facing side of
/// every styrofoam sphere, and clutter groups (one spike, some brighter than
/// the balls, plus weak neighbors).
inline RadarRender render_radar_cloud(const SceneSpec& spec, const TargetGeometry& geom) {
  spec.validate();
  geom.validate();
  const auto truth = target_truth(spec, geom);
  std::array<Point3, 5> balls;
  for (int i = 0; i < 4; ++i) balls[i] = truth.corner_balls_radar[i];
  balls[4] = truth.anchor_radar;
  for (const auto& b : balls) {
    const double range = b.norm();
    if (range < 0.20 || range > 0.65) throw SceneError("target outside the radar range 0.20-0.65 m");
  }

  Rng rng(derive_seed(spec.seed, 202));
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  synth::RadarSamples s;

  for (int k = 0; k < 5; ++k) {
    const Point3 c = balls[k] + spec.radar_jitter * Vec3(g(rng), g(rng), g(rng));
    const double peak = -3.0 * uni(rng);
    s.add(c, peak, k);
    for (int j = 1; j < spec.blob_points; ++j) {
      const Vec3 off = spec.blob_spread * Vec3(g(rng), g(rng), g(rng));
      const double rel = spec.blob_spread > 0.0 ? off.norm() / spec.blob_spread : 0.0;
      s.add(c + off, peak - 1.5 * rel * rel, k);
    }
  }

  std::vector<Point3> keep_clear(balls.begin(), balls.end());
  if (spec.multipath_ghosts) {
    // ghosts are as sharp as direct returns, only weaker
    const Vec3 into_board = spec.target_pose.rotation.col(2);
    for (int bounce = 1; bounce <= 2; ++bounce) {
      for (int k = 0; k < 4; ++k) {
        const Point3 c = truth.corner_balls_radar[k] + bounce * geom.board_offset * into_board +
                         spec.radar_jitter * Vec3(g(rng), g(rng), g(rng));
        const double peak = -3.0 - spec.ghost_loss_db * bounce * uni(rng);
        s.add(c, peak, kLabelGhost);
        for (int j = 1; j < spec.blob_points; ++j) {
          const Vec3 off = spec.blob_spread * Vec3(g(rng), g(rng), g(rng));
          const double rel = spec.blob_spread > 0.0 ? off.norm() / spec.blob_spread : 0.0;
          s.add(c + off, peak - 1.5 * rel * rel, kLabelGhost);
        }
        keep_clear.push_back(c);
      }
    }
  }

  const double r = geom.styrofoam_radius;
  for (int k = 0; k < 4; ++k) {
    const Point3 c = truth.corner_balls_radar[k];
    const Vec3 to_sensor = -c.normalized();
    int made = 0;
    while (made < spec.styrofoam_scatter) {
      const Vec3 u = Vec3(g(rng), g(rng), g(rng)).normalized();
      if (u.dot(to_sensor) < 0.5) continue;
      s.add(c + r * u, -5.0 - 7.0 * uni(rng), kLabelStyrofoam);
      ++made;
    }
  }

  const Vec3 extent = spec.clutter_volume.hi - spec.clutter_volume.lo;
  int placed = 0, attempts = 0;
  while (placed < spec.clutter_count) {
    if (++attempts > 100000) throw SceneError("cannot place clutter away from the target");
    const Point3 c = spec.clutter_volume.lo + extent.cwiseProduct(Vec3(uni(rng), uni(rng), uni(rng)));
    bool clear = true;
    for (const auto& b : keep_clear) clear = clear && (c - b).norm() >= spec.clutter_clearance;
    if (!clear) continue;
    s.add(c, -12.0 + 15.0 * uni(rng), kLabelClutter);
    for (int j = 0; j < 4; ++j) {
      s.add(c + 0.004 * Vec3(g(rng), g(rng), g(rng)), -8.0 - 12.0 * uni(rng), kLabelClutter);
    }
    ++placed;
  }
  return {s.to_cloud(), s.label};
}

inline SyntheticScene render_target_scene(const SceneSpec& spec, const TargetGeometry& geom) {
  SyntheticScene scene;
  scene.capture = render_depth_capture(spec, geom);
  auto radar = render_radar_cloud(spec, geom);
  scene.radar = std::move(radar.cloud);
  scene.radar_labels = std::move(radar.labels);
  scene.truth = target_truth(spec, geom);
  return scene;
}

// ground_truth.json written next to every simulated scene.
inline nlohmann::json ground_truth_json(const SceneSpec& spec, const TargetTruth& truth) {
  auto pts = [](auto const& list) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : list) a.push_back({p.x(), p.y(), p.z()});
    return a;
  };
  RigidCalibration gt;
  gt.transform = truth.extrinsic;
  nlohmann::json j;
  j["seed"] = spec.seed;
  j["extrinsic"] = calibration_to_json(gt);
  j["target_pose"] = calibration_to_json(RigidCalibration{spec.target_pose, 0.0, {}});
  j["corner_balls_radar"] = pts(truth.corner_balls_radar);
  j["anchor_radar"] = {truth.anchor_radar.x(), truth.anchor_radar.y(), truth.anchor_radar.z()};
  j["sphere_centers_optical"] = pts(truth.sphere_centers_optical);
  j["optical_noise"] = spec.optical_noise;
  j["radar_jitter"] = spec.radar_jitter;
  j["clutter_count"] = spec.clutter_count;
  j["multipath_ghosts"] = spec.multipath_ghosts;
  return j;
}

inline RigidTransform ground_truth_extrinsic(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("extrinsic")) throw MalformedInput("ground truth: missing 'extrinsic'");
  return calibration_from_json(j["extrinsic"]).transform;
}

// ---------------------------------------------------------------------------
// Evaluation objects and the refinement plate
// ---------------------------------------------------------------------------

enum class EvalObject { kDisk, kSymbol, kHandProxy, kPlate };

inline std::string to_string(EvalObject o) {
  switch (o) {
    case EvalObject::kDisk: return "disk";
    case EvalObject::kSymbol: return "symbol";
    case EvalObject::kHandProxy: return "hand";
    case EvalObject::kPlate: return "plate";
  }
  return "?";
}

struct EvalRender {
  DepthCapture capture;
  RadarCloud radar;
  PointList surface_radar;  // noiseless radar-side samples of the object surface
};

struct EvalSampling {
  double radar_spacing = 0.001;
  double radar_noise = 0.0002;
  double hand_max_angle_deg = 60.0;
  double disk_radius = 0.05;
  double plate_half_size = 0.075;
};

namespace synth {

inline World eval_world(EvalObject object, const EvalSampling& es) {
  World w;
  PatchPrim p;
  p.origin = Point3::Zero();
  p.axis_u = Vec3::UnitX();
  p.axis_v = Vec3::UnitY();
  switch (object) {
    case EvalObject::kDisk:
      p.shape = PatchShape::kDisk;
      p.radius = es.disk_radius;
      p.color = Rgb{170, 170, 175};
      w.patches.push_back(p);
      break;
    case EvalObject::kPlate:
      p.half_u = p.half_v = es.plate_half_size;
      p.color = Rgb{150, 120, 90};
      w.patches.push_back(p);
      break;
    case EvalObject::kSymbol:
      // a cross-shaped cutout
      p.shape = PatchShape::kPolygon;
      p.polygon = {{-0.015, -0.05}, {0.015, -0.05}, {0.015, -0.015}, {0.05, -0.015}, {0.05, 0.015},
                   {0.015, 0.015},  {0.015, 0.05},  {-0.015, 0.05}, {-0.015, 0.015}, {-0.05, 0.015},
                   {-0.05, -0.015}, {-0.015, -0.015}};
      p.color = Rgb{190, 150, 100};
      w.patches.push_back(p);
      break;
    case EvalObject::kHandProxy: {
      const Rgb c{200, 200, 210};
      w.spheres.push_back({Point3(0, 0.01, 0), 0.03, c});
      for (int f = 0; f < 4; ++f) {
        const double x = -0.021 + 0.014 * f;
        for (int j = 0; j < 3; ++j) w.spheres.push_back({Point3(x, -0.028 - 0.016 * j, 0.0), 0.008, c});
      }
      w.spheres.push_back({Point3(-0.035, 0.0, -0.004), 0.009, c});
      w.spheres.push_back({Point3(-0.049, -0.012, -0.006), 0.008, c});
      break;
    }
  }
  return w;
}

}  // namespace synth

/// Renders an evaluation object at spec.target_pose for both sensors. Both
/// sample the same ground-truth surface; the depth capture holds only the
/// object. Flat objects are sampled on a regular radar grid; the hand proxy
/// keeps only sensor-facing points within hand_max_angle_deg.
inline EvalRender render_eval_object(const SceneSpec& spec, EvalObject object, const EvalSampling& es = {}) {
  spec.validate();
  const auto world_obj = synth::eval_world(object, es);
  const auto world_radar = synth::transformed(world_obj, spec.target_pose);
  const RigidTransform obj_to_optical = compose(invert(spec.ground_truth_extrinsic), spec.target_pose);
  const auto world_optical = synth::transformed(world_obj, obj_to_optical);

  EvalRender out;
  out.capture = synth::render(world_optical, spec.intrinsics, spec.width, spec.height,
                              {spec.optical_noise, spec.optical_noise_ref_depth, spec.grazing_floor},
                              derive_seed(spec.seed, 303));
  std::size_t valid = 0;
  for (float z : out.capture.depth) valid += z > 0.f;
  if (valid == 0) throw SceneError("evaluation object outside the optical frustum");

  Rng rng(derive_seed(spec.seed, 404));
  std::normal_distribution<double> g(0.0, 1.0);
  synth::RadarSamples clean;
  for (const auto& p : world_radar.patches) synth::sample_patch(p, es.radar_spacing, 0.0, rng, clean, kLabelObject);
  if (!world_radar.spheres.empty()) {
    const double cos_max = std::cos(es.hand_max_angle_deg * std::numbers::pi / 180.0);
    for (std::size_t i = 0; i < world_radar.spheres.size(); ++i) {
      const auto& s = world_radar.spheres[i];
      const double area = 4.0 * std::numbers::pi * s.radius * s.radius;
      const int n = std::max(16, static_cast<int>(area / (es.radar_spacing * es.radar_spacing)));
      for (const auto& u : synth::fibonacci_sphere(n)) {
        const Point3 q = s.center + s.radius * u;
        if (u.dot(-q.normalized()) < cos_max) continue;
        bool buried = false;
        for (std::size_t j = 0; j < world_radar.spheres.size() && !buried; ++j) {
          buried = j != i && (q - world_radar.spheres[j].center).norm() < world_radar.spheres[j].radius;
        }
        if (!buried) clean.add(q, 0.0, kLabelObject);
      }
    }
  }
  for (const auto& p : clean.points) {
    const double range = p.norm();
    if (range < 0.20 || range > 0.65) throw SceneError("evaluation object outside the radar range 0.20-0.65 m");
  }
  out.surface_radar = clean.points;
  synth::RadarSamples noisy;
  for (std::size_t i = 0; i < clean.points.size(); ++i) {
    noisy.add(clean.points[i] + es.radar_noise * Vec3(g(rng), g(rng), g(rng)), -1.5 * std::abs(g(rng)),
              kLabelObject);
  }
  out.radar = noisy.to_cloud();
  return out;
}

/// Pose (object -> radar) that puts an object on the optical axis at
/// `distance`, facing the optical sensor. Used for the refinement plate:
/// projective pairs run along optical rays, so an off-axis plate would turn
/// normal corrections into in-plane drift the plate cannot constrain.
inline RigidTransform optical_axis_pose(const RigidTransform& extrinsic, double distance) {
  RigidTransform in_optical;
  in_optical.translation = Vec3(0.0, 0.0, distance);
  return compose(extrinsic, in_optical);
}

// ---------------------------------------------------------------------------
// Seeded scene suites
// ---------------------------------------------------------------------------

struct SuiteParams {
  double min_distance = 0.30;
  double max_distance = 0.40;
  double max_yaw_deg = 20.0;
  double max_pitch_deg = 5.0;
  double max_lateral = 0.03;
  double optical_noise = 0.002;
  double radar_jitter = 0.0001;
  int clutter_count = 15;
};

/// Scene spec with a random target pose facing the radar. Clutter box sits
/// around the target.
inline SceneSpec random_scene_spec(std::uint64_t seed, const SuiteParams& sp = {}) {
  Rng rng(derive_seed(seed, 505));
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  SceneSpec spec;
  spec.seed = seed;
  const double dist = sp.min_distance + (sp.max_distance - sp.min_distance) * 0.5 * (uni(rng) + 1.0);
  spec.target_pose.rotation = rotation_xyz_deg(sp.max_pitch_deg * uni(rng), sp.max_yaw_deg * uni(rng), 0.0);
  spec.target_pose.translation = Vec3(sp.max_lateral * uni(rng), sp.max_lateral * uni(rng), dist);
  spec.optical_noise = sp.optical_noise;
  spec.radar_jitter = sp.radar_jitter;
  spec.clutter_count = sp.clutter_count;
  const Point3 c = spec.target_pose.translation;
  spec.clutter_volume = Box{c + Vec3(-0.15, -0.15, -0.10), c + Vec3(0.15, 0.15, 0.15)};
  return spec;
}

}  // namespace nfcalib
