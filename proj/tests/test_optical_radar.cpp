#include <gtest/gtest.h>

#include <random>

#include "nfcalib/optical.hpp"
#include "nfcalib/radar.hpp"
#include "nfcalib/synthetic.hpp"

using namespace nfcalib;

namespace {

constexpr double kRadius = 0.025;

// Silhouette radius in pixels of a sphere centered on the optical axis.
double on_axis_radius_px(double fx, double z, double r) { return fx * r / std::sqrt(z * z - r * r); }

DepthCapture render_world(const synth::World& w, double sigma = 0.0, std::uint64_t seed = 1) {
  SceneSpec spec;
  return synth::render(w, spec.intrinsics, spec.width, spec.height, {sigma, 0.3, 0.2}, seed);
}

PointList hemisphere(const Point3& c, double r, int n) {
  PointList out;
  for (const auto& u : synth::fibonacci_sphere(2 * n)) {
    if (u.z() < 0.0) out.push_back(c + r * u);  // sensor-facing half
  }
  return out;
}

SphereCloud cloud_of(const PointList& pts) {
  SphereCloud c;
  c.points = pts;
  c.normals.assign(pts.size(), Vec3(0, 0, -1));
  c.weights.assign(pts.size(), 1.0);
  return c;
}

ClusterSet clusters_of(const PointList& centers) {
  ClusterSet c;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    c.centers.push_back(centers[i]);
    c.mean_confidence.push_back(1.0);
    c.member_counts.push_back(1);
    c.seed_index.push_back(i);
    c.members.push_back({i});
  }
  return c;
}

// Ideal target in the radar frame: corners in order, then the anchor.
PointList ideal_target(const RigidTransform& pose, const TargetGeometry& geom = {}) {
  PointList out;
  for (const auto& c : geom.corner_positions()) out.push_back(apply_transform(pose, c));
  out.push_back(apply_transform(pose, geom.anchor_position()));
  return out;
}

RigidTransform pose_at(double z, double yaw_deg = 0.0) {
  RigidTransform t;
  t.rotation = rotation_xyz_deg(0, yaw_deg, 0);
  t.translation = Vec3(0, 0, z);
  return t;
}

}  // namespace

// ---------------------------------------------------------------- circle detection

TEST(Hough, SingleSphereMatchesAnalyticProjection) {
  synth::World w;
  w.spheres.push_back({Point3(0, 0, 0.3), kRadius, Rgb{200, 40, 40}});
  const auto cap = render_world(w);
  const auto cands = detect_circles(cap);
  ASSERT_FALSE(cands.empty());
  const auto& k = cap.intrinsics;
  EXPECT_NEAR(cands[0].center_px.x(), k.cx, 1.0);
  EXPECT_NEAR(cands[0].center_px.y(), k.cy, 1.0);
  EXPECT_NEAR(cands[0].radius_px, on_axis_radius_px(k.fx, 0.3, kRadius), 1.0);
}

TEST(Hough, BlankDepthMapHasNoTarget) {
  DepthCapture cap(160, 120, CameraIntrinsics{});
  std::fill(cap.depth.begin(), cap.depth.end(), 0.5f);
  EXPECT_THROW(detect_circles(cap), NoTargetDetected);
  std::fill(cap.depth.begin(), cap.depth.end(), 0.0f);
  EXPECT_THROW(detect_circles(cap), NoTargetDetected);
}

TEST(Hough, FourSpheresOnBoard) {
  SceneSpec spec;
  spec.optical_noise = 0.0;
  const TargetGeometry geom;
  const auto cap = render_depth_capture(spec, geom);
  const auto truth = target_truth(spec, geom);
  const auto cands = detect_circles(cap);
  ASSERT_GE(cands.size(), 4u);
  const auto& k = spec.intrinsics;
  for (const auto& c : truth.sphere_centers_optical) {
    // off-axis silhouettes are ellipses; their centroid is the circle to find
    synth::SpherePrim s{c, geom.styrofoam_radius, {}};
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    double n = 0;
    for (int v = 0; v < cap.height; ++v) {
      for (int u = 0; u < cap.width; ++u) {
        synth::Hit hit;
        synth::intersect(s, Vec3((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0), hit);
        if (hit.found()) {
          sum += Eigen::Vector2d(u, v);
          n += 1;
        }
      }
    }
    const Eigen::Vector2d silhouette = sum / n;
    double best = 1e9;
    for (int i = 0; i < 4; ++i) best = std::min(best, (cands[i].center_px - silhouette).norm());
    EXPECT_LT(best, 2.0);
  }
}

TEST(Hough, MaxRangeMustBePositive) {
  DepthCapture cap(16, 16, CameraIntrinsics{});
  EXPECT_THROW(detect_circles(cap, 0.0), ValidationError);
}

// ---------------------------------------------------------------- circle filtering

namespace {

struct PaintedCircles {
  DepthCapture cap;
  std::vector<CircleCandidate> cands;
};

PaintedCircles painted(const std::vector<std::pair<CircleCandidate, Rgb>>& circles) {
  PaintedCircles p{DepthCapture(400, 300, CameraIntrinsics{}), {}};
  for (const auto& [c, color] : circles) {
    for (int v = 0; v < p.cap.height; ++v) {
      for (int u = 0; u < p.cap.width; ++u) {
        if ((Eigen::Vector2d(u, v) - c.center_px).norm() <= c.radius_px) p.cap.rgb[p.cap.index(u, v)] = color;
      }
    }
    p.cands.push_back(c);
  }
  return p;
}

const std::vector<Rgb> kPalette = SceneSpec::default_palette();

std::vector<std::pair<CircleCandidate, Rgb>> four_true() {
  return {{{Eigen::Vector2d(100, 100), 30, 100}, kPalette[0]},
          {{Eigen::Vector2d(200, 100), 30, 90}, kPalette[1]},
          {{Eigen::Vector2d(100, 200), 31, 80}, kPalette[2]},
          {{Eigen::Vector2d(200, 200), 29, 70}, kPalette[3]}};
}

}  // namespace

TEST(Filter, DuplicateIsRejected) {
  auto circles = four_true();
  circles.insert(circles.begin() + 1, {{Eigen::Vector2d(101, 100), 30, 95}, kPalette[0]});
  const auto p = painted(circles);
  const auto kept = filter_circles(p.cands, p.cap, kPalette, 0.2, 40);
  ASSERT_EQ(kept.size(), 4u);
  for (const auto& k : kept) EXPECT_NE(k.score, 95.0);
}

TEST(Filter, OutOfPaletteColorIsRejected) {
  auto circles = four_true();
  circles.insert(circles.begin(), {{Eigen::Vector2d(320, 150), 30, 200}, Rgb{128, 0, 128}});
  const auto p = painted(circles);
  const auto kept = filter_circles(p.cands, p.cap, kPalette, 0.2, 40);
  ASSERT_EQ(kept.size(), 4u);
  for (const auto& k : kept) EXPECT_NE(k.score, 200.0);
  // without a palette the color test is skipped and the background circle wins a slot
  const auto loose = filter_circles(p.cands, p.cap, {}, 0.2, 40);
  EXPECT_EQ(loose[0].score, 200.0);
}

TEST(Filter, SizeOutlierIsRejected) {
  auto circles = four_true();
  circles.insert(circles.begin() + 2, {{Eigen::Vector2d(320, 150), 60, 85}, kPalette[1]});
  const auto p = painted(circles);
  const auto kept = filter_circles(p.cands, p.cap, kPalette, 0.2, 40);
  for (const auto& k : kept) EXPECT_NE(k.score, 85.0);
}

TEST(Filter, ThreeCirclesAreNotATarget) {
  auto circles = four_true();
  circles.pop_back();
  const auto p = painted(circles);
  EXPECT_THROW(filter_circles(p.cands, p.cap, kPalette, 0.2, 40), NoTargetDetected);
}

// ---------------------------------------------------------------- back-projection

TEST(Backproject, PrincipalPointMapsToOpticalAxis) {
  CameraIntrinsics k;
  EXPECT_TRUE(k.backproject(k.cx, k.cy, 0.3).isApprox(Point3(0, 0, 0.3)));
  DepthCapture cap(640, 576, k);
  std::fill(cap.depth.begin(), cap.depth.end(), 0.3f);
  const auto cloud = backproject_circle(cap, {Eigen::Vector2d(k.cx, k.cy), 10, 1});
  bool found = false;
  for (const auto& p : cloud.points) found = found || (p - Point3(0, 0, 0.3)).norm() < 1e-7;
  EXPECT_TRUE(found);
  for (std::size_t i = 0; i < cloud.size(); ++i) EXPECT_NEAR(cloud.weights[i], 1.0, 1e-6);
}

TEST(Backproject, ProjectionRoundTrip) {
  CameraIntrinsics k;
  for (double u : {0.0, 17.5, 320.0, 639.0}) {
    for (double v : {0.0, 288.0, 575.0}) {
      const auto px = k.project(k.backproject(u, v, 0.37));
      EXPECT_NEAR(px.x(), u, 1e-9);
      EXPECT_NEAR(px.y(), v, 1e-9);
    }
  }
}

TEST(Backproject, RenderedSphereSurface) {
  synth::World w;
  const Point3 c(0.01, -0.02, 0.3);
  w.spheres.push_back({c, kRadius, Rgb{200, 40, 40}});
  const auto cap = render_world(w);
  const auto px = cap.intrinsics.project(c);
  const auto cloud = backproject_circle(cap, {px, 35, 1});
  ASSERT_GT(cloud.size(), 100u);
  for (const auto& p : cloud.points) EXPECT_LT(std::abs((p - c).norm() - kRadius), 5e-4);
  for (double wgt : cloud.weights) {
    EXPECT_GE(wgt, 0.0);
    EXPECT_LE(wgt, 1.0);
  }
}

TEST(Backproject, InvalidRegionIsInsufficient) {
  DepthCapture cap(100, 100, CameraIntrinsics{50, 50, 50, 50});
  EXPECT_THROW(backproject_circle(cap, {Eigen::Vector2d(50, 50), 20, 1}), InsufficientData);
}

// ---------------------------------------------------------------- sphere fitting

TEST(SphereFit, NoiselessHemisphereIsExact) {
  const Point3 c(0, 0, 0.3);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto cloud = cloud_of(hemisphere(c, kRadius, 200));
    Rng rng(seed);
    const auto fit = fit_sphere_ransac(cloud, kRadius, {}, rng);
    EXPECT_LT((fit.center - c).norm(), 1e-6);
    EXPECT_NEAR(fit.inlier_ratio, 1.0, 1e-12);
  }
  const auto pts = hemisphere(c, kRadius, 50);
  const std::vector<double> ones(pts.size(), 1.0);
  EXPECT_LT((*fit_sphere_center(pts, ones, kRadius) - c).norm(), 1e-9);
}

TEST(SphereFit, TwentyPercentOutliers) {
  const Point3 c(0, 0, 0.3);
  Rng rng(9);
  std::uniform_real_distribution<double> u(-0.025, 0.025);
  auto pts = hemisphere(c, kRadius, 200);
  const std::size_t n_out = pts.size() / 4;  // 20% of the final cloud
  for (std::size_t i = 0; i < n_out; ++i) pts.push_back(c + Vec3(u(rng), u(rng), u(rng)));
  const auto fit = fit_sphere_ransac(cloud_of(pts), kRadius, {}, rng);
  EXPECT_LT((fit.center - c).norm(), 5e-4);
}

TEST(SphereFit, GrazingWeightsHelp) {
  // depth noise along the viewing ray grows at grazing angles; the weights are
  // the estimated cosines, so the weighted fit should usually be closer
  synth::World w;
  const Point3 c(0, 0, 0.3);
  w.spheres.push_back({c, kRadius, Rgb{200, 40, 40}});
  int better = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto cap = render_world(w, 0.002, 1000 + trial);
    const auto px = cap.intrinsics.project(c);
    const auto cloud = backproject_circle(cap, {px, on_axis_radius_px(cap.intrinsics.fx, 0.3, kRadius), 1});
    const std::vector<double> ones(cloud.size(), 1.0);
    const auto weighted = fit_sphere_center(cloud.points, cloud.weights, kRadius, 10);
    const auto plain = fit_sphere_center(cloud.points, ones, kRadius, 10);
    ASSERT_TRUE(weighted && plain);
    better += (*weighted - c).norm() <= (*plain - c).norm();
  }
  EXPECT_GE(better, 95);
}

TEST(SphereFit, TooFewPointsAndBadRadius) {
  Rng rng(1);
  const auto cloud = cloud_of(hemisphere(Point3(0, 0, 0.3), kRadius, 8));
  EXPECT_THROW(fit_sphere_ransac(cloud_of({Point3(0, 0, 1)}), kRadius, {}, rng), InsufficientData);
  EXPECT_THROW(fit_sphere_ransac(cloud, 0.0, {}, rng), ValidationError);
}

TEST(SphereFit, PureNoiseFails) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  PointList pts;
  for (int i = 0; i < 300; ++i) pts.emplace_back(u(rng), u(rng), 1.0 + u(rng));
  EXPECT_THROW(fit_sphere_ransac(cloud_of(pts), kRadius, {}, rng), FitFailed);
}

// ---------------------------------------------------------------- ordering

TEST(Ordering, UnitSquare) {
  const std::array<Point3, 4> pts = {Point3(0, 0, 0), Point3(1, 0, 0), Point3(0, 1, 0), Point3(1, 1, 0)};
  const auto o = order_centers(pts, Vec3(0, 1, 0), Vec3(1, 0, 0));
  EXPECT_EQ(o.centers[kTopLeft], Point3(0, 1, 0));
  EXPECT_EQ(o.centers[kTopRight], Point3(1, 1, 0));
  EXPECT_EQ(o.centers[kBottomLeft], Point3(0, 0, 0));
  EXPECT_EQ(o.centers[kBottomRight], Point3(1, 0, 0));
}

TEST(Ordering, InPlaneRotation) {
  const Mat3 R = rotation_xyz_deg(0, 0, 30);
  const std::array<Point3, 4> base = {Point3(-0.5, 0.5, 0), Point3(0.5, 0.5, 0), Point3(-0.5, -0.5, 0),
                                      Point3(0.5, -0.5, 0)};  // already TL, TR, BL, BR
  std::array<Point3, 4> rot;
  for (int i = 0; i < 4; ++i) rot[i] = R * base[i];
  const auto o = order_centers(rot, Vec3(0, 1, 0), Vec3(1, 0, 0));
  EXPECT_EQ(o.source_index, (std::array<int, 4>{0, 1, 2, 3}));
}

TEST(Ordering, TiltNearNinetyDegrees) {
  // the board tips back by 89 degrees about the right axis: up barely keeps a
  // positive projection on the board's own up direction
  const Mat3 R = rotation_xyz_deg(89, 0, 0);
  const std::array<Point3, 4> base = {Point3(-0.03, 0.03, 0), Point3(0.03, 0.03, 0), Point3(-0.03, -0.03, 0),
                                      Point3(0.03, -0.03, 0)};
  std::array<Point3, 4> tilted;
  for (int i = 0; i < 4; ++i) tilted[i] = R * base[i] + Vec3(0, 0, 0.4);
  const auto o = order_centers(tilted, Vec3(0, 1, 0), Vec3(1, 0, 0));
  EXPECT_EQ(o.source_index, (std::array<int, 4>{0, 1, 2, 3}));
}

TEST(Ordering, PermutationInvariant) {
  std::array<Point3, 4> pts = {Point3(0.1, 0.9, 0.3), Point3(1.05, 1.0, 0.31), Point3(0, -0.05, 0.29),
                               Point3(0.95, 0.02, 0.3)};
  const auto ref = order_centers(pts, Vec3(0, 1, 0), Vec3(1, 0, 0)).centers;
  std::array<int, 4> perm{0, 1, 2, 3};
  do {
    std::array<Point3, 4> p;
    for (int i = 0; i < 4; ++i) p[i] = pts[perm[i]];
    EXPECT_EQ(order_centers(p, Vec3(0, 1, 0), Vec3(1, 0, 0)).centers, ref);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST(Ordering, AmbiguousSplit) {
  // a diamond: middle two points share the same height
  const std::array<Point3, 4> pts = {Point3(0, 1, 0), Point3(-1, 0, 0), Point3(1, 0, 0), Point3(0, -1, 0)};
  EXPECT_THROW(order_centers(pts, Vec3(0, 1, 0), Vec3(1, 0, 0)), AmbiguousOrdering);
}

// ---------------------------------------------------------------- radar clusters

TEST(Clusters, FiveTargetsAboveFaintClutter) {
  const auto target = ideal_target(pose_at(0.35));
  PointList pts(target.begin(), target.end());
  std::vector<double> amp(pts.size(), 1.0);
  Rng rng(5);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (int i = 0; i < 300; ++i) {
    pts.push_back(Point3(u(rng), u(rng), 0.35 + u(rng)));
    amp.push_back(std::pow(10.0, -30.0 / 20.0));
  }
  const auto cloud = RadarCloud::from_amplitudes(pts, amp);
  const auto cs = detect_clusters(cloud);
  ASSERT_EQ(cs.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(cs.seed_index[k], k);
}

TEST(Clusters, NearbyPointsMerge) {
  PointList pts = {Point3(0, 0, 0.3), Point3(0.01, 0, 0.3)};
  std::vector<double> amp = {0.5, 1.0};
  for (int i = 0; i < 4; ++i) {
    pts.push_back(Point3(0.05 * (i + 1), 0.05, 0.3));
    amp.push_back(0.8);
  }
  const auto cs = detect_clusters(RadarCloud::from_amplitudes(pts, amp));
  ASSERT_EQ(cs.size(), 5u);
  EXPECT_EQ(cs.seed_index[0], 1u);  // higher-confidence point seeds the pair
  EXPECT_EQ(cs.member_counts[0], 2);
  EXPECT_TRUE(cs.centers[0].isApprox(Point3(0.005, 0, 0.3)));
}

TEST(Clusters, DistantScattererIsGated) {
  auto pts = ideal_target(pose_at(0.35));
  std::vector<double> amp = {1.0, 0.9, 0.9, 0.9, 0.9};  // the first seed is exempt from the gate
  pts.push_back(Point3(0.0, 0.0, 0.85));                // brighter than four balls, 50 cm away
  amp.push_back(0.95);
  const auto cs = detect_clusters(RadarCloud::from_amplitudes(pts, amp));
  ASSERT_EQ(cs.size(), 5u);
  for (auto s : cs.seed_index) EXPECT_NE(s, 5u);
}

TEST(Clusters, TooFewClusters) {
  const auto cloud = RadarCloud::from_amplitudes({Point3(0, 0, 0.3), Point3(0.1, 0, 0.3)}, {1.0, 1.0});
  EXPECT_THROW(detect_clusters(cloud), InsufficientClusters);
  EXPECT_THROW(detect_clusters(cloud, ClusterParams{15, 0.3, 0.2, 20, 7}), ValidationError);
}

TEST(Clusters, MembersStayWithinSuppressionRadius) {
  SceneSpec spec = random_scene_spec(77);
  const auto r = render_radar_cloud(spec, TargetGeometry{});
  const auto cs = detect_clusters(r.cloud);
  for (std::size_t c = 0; c < cs.size(); ++c) {
    EXPECT_LE(cs.member_counts[c], 7);
    for (auto i : cs.members[c]) EXPECT_LE((r.cloud.points[i] - r.cloud.points[cs.seed_index[c]]).norm(), 0.02);
  }
}

// ---------------------------------------------------------------- energy

namespace {

struct Candidate {
  std::array<Point3, 4> corners;
  Point3 anchor;
  Plane plane;
};

Candidate candidate_from(const PointList& t) {
  Candidate c;
  for (int i = 0; i < 4; ++i) c.corners[i] = t[i];
  c.anchor = t[4];
  c.plane = fit_plane_tls(std::span<const Point3>(c.corners.data(), 4));
  return c;
}

}  // namespace

TEST(Energy, PerfectGeometryIsZero) {
  const auto c = candidate_from(ideal_target(pose_at(0.35, 15)));
  const auto e = evaluate_energy(c.corners, c.anchor, c.plane, {}, {});
  EXPECT_NEAR(e.total, 0.0, 1e-12);
  EXPECT_NEAR(e.data, 0.0, 1e-12);
  EXPECT_NEAR(e.sphere, 0.0, 1e-12);
  EXPECT_NEAR(e.plane, 0.0, 1e-12);
  EXPECT_NEAR(e.anchor, 0.0, 1e-12);
}

TEST(Energy, AnchorShiftOnlyMovesAnchorTerm) {
  auto c = candidate_from(ideal_target(pose_at(0.35)));
  c.anchor += Vec3(0.005, 0, 0);  // in the board plane
  const auto e = evaluate_energy(c.corners, c.anchor, c.plane, {}, {});
  EXPECT_NEAR(e.anchor, 0.005, 1e-12);
  EXPECT_NEAR(e.data, 0.0, 1e-12);
  EXPECT_NEAR(e.sphere, 0.0, 1e-12);
  EXPECT_NEAR(e.plane, 0.0, 1e-12);
  EXPECT_NEAR(e.total, 4.0 * 0.005, 1e-12);
}

TEST(Energy, CornerOffPlaneRaisesDataTerm) {
  const TargetGeometry geom;
  auto moved = ideal_target(pose_at(0.35));
  moved[kTopLeft] += Vec3(0, 0, 0.003);
  const auto c = candidate_from(moved);
  const auto e = evaluate_energy(c.corners, c.anchor, c.plane, geom, {});
  // lifting one corner by h leaves residuals of about h/4 each (the plane tilts slightly)
  EXPECT_NEAR(e.data, 0.003, 1e-5);
  // the pair term only sees the corners after projection onto that plane
  std::array<Point3, 4> proj;
  for (int i = 0; i < 4; ++i) proj[i] = c.corners[i] - c.plane.normal * (c.corners[i] - c.plane.reference_point).dot(c.plane.normal);
  double sphere = 0.0;
  const auto d = geom.pairwise_distances();
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) sphere += std::abs((proj[i] - proj[j]).norm() - d(i, j));
  }
  EXPECT_NEAR(e.sphere, sphere, 1e-12);
  EXPECT_GT(e.sphere, 0.0);
}

TEST(Energy, RigidInvariance) {
  Rng rng(12);
  std::normal_distribution<double> g(0.0, 0.002);
  auto t = ideal_target(pose_at(0.35, 10));
  for (auto& p : t) p += Vec3(g(rng), g(rng), g(rng));
  const auto c = candidate_from(t);
  const auto e0 = evaluate_energy(c.corners, c.anchor, c.plane, {}, {});
  for (int trial = 0; trial < 20; ++trial) {
    RigidTransform T;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    T.rotation = rotation_xyz_deg(45.0 * u(rng), 45.0 * u(rng), 45.0 * u(rng));
    T.translation = Vec3(u(rng), u(rng), u(rng));
    auto moved = t;
    for (auto& p : moved) p = apply_transform(T, p);
    const auto c1 = candidate_from(moved);
    EXPECT_NEAR(evaluate_energy(c1.corners, c1.anchor, c1.plane, {}, {}).total, e0.total, 1e-9);
  }
}

// ---------------------------------------------------------------- localization

TEST(Localize, PerfectTargetHasZeroEnergy) {
  const auto t = ideal_target(pose_at(0.35, 10));
  const auto r = localize_radar_target(clusters_of({t[4], t[2], t[0], t[3], t[1]}), TargetGeometry{});
  EXPECT_LT(r.energy.total, 1e-9);
  for (int i = 0; i < 4; ++i) EXPECT_LT((r.corners[i] - t[i]).norm(), 1e-12);
  EXPECT_EQ(r.anchor_cluster, 0u);
  EXPECT_DOUBLE_EQ(r.inlier_ratio, 1.0);
}

TEST(Localize, TrueSubsetAmongClutter) {
  int hits = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(derive_seed(31, trial));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const auto pose = pose_at(0.3 + 0.1 * std::abs(u(rng)), 20.0 * u(rng));
    const auto t = ideal_target(pose);
    PointList pts;
    for (int i = 0; i < 15; ++i) pts.push_back(Point3(0.15 * u(rng), 0.15 * u(rng), 0.35 + 0.12 * u(rng)));
    std::vector<std::size_t> where(5);
    for (int k = 0; k < 5; ++k) {
      where[k] = static_cast<std::size_t>(rng() % (pts.size() + 1));
      pts.insert(pts.begin() + static_cast<std::ptrdiff_t>(where[k]), t[k]);
    }
    const auto r = localize_radar_target(clusters_of(pts), TargetGeometry{});
    bool ok = true;
    for (int i = 0; i < 4; ++i) ok = ok && (r.corners[i] - t[i]).norm() < 1e-12;
    ok = ok && (r.anchor - t[4]).norm() < 1e-12;
    hits += ok;
  }
  EXPECT_GE(hits, 98);
}

TEST(Localize, NoisyTargetEnergyMatchesRecomputation) {
  Rng rng(21);
  std::normal_distribution<double> g(0.0, 0.002);
  auto t = ideal_target(pose_at(0.35, -8));
  for (auto& p : t) p += Vec3(g(rng), g(rng), g(rng));
  // 2 mm on every center puts the true subset above the default rejection level
  LocalizeParams p;
  p.energy_reject = 1.0;
  const auto r = localize_radar_target(clusters_of(t), TargetGeometry{}, p);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(r.corners[i], t[i]);
  EXPECT_EQ(r.anchor, t[4]);
  const auto c = candidate_from(t);
  const auto e = evaluate_energy(c.corners, c.anchor, c.plane, TargetGeometry{}, EnergyWeights{});
  EXPECT_NEAR(r.energy.total, e.total, 1e-12);
}

TEST(Localize, AbsentTargetIsRejected) {
  Rng rng(2);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  PointList pts;
  for (int i = 0; i < 8; ++i) pts.push_back(Point3(u(rng), u(rng), 0.4 + u(rng)));
  EXPECT_THROW(localize_radar_target(clusters_of(pts), TargetGeometry{}), LocalizationFailed);
  EXPECT_THROW(localize_radar_target(clusters_of({pts[0], pts[1]}), TargetGeometry{}), InsufficientClusters);
}
