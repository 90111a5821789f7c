#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "nfcalib/errors.hpp"
#include "nfcalib/geometry.hpp"
#include "nfcalib/io.hpp"
#include "nfcalib/ransac.hpp"

namespace nfcalib {

enum class CorrespondenceSource { kTargetCenters, kProjectiveRefinement };

struct CorrespondenceSet {
  PointList optical;
  PointList radar;
  CorrespondenceSource source = CorrespondenceSource::kTargetCenters;

  std::size_t size() const { return optical.size(); }
};

struct KabschDiagnostics {
  Vec3 singular_values = Vec3::Zero();           // of the cross-covariance H
  Vec3 expected_singular_values = Vec3::Zero();  // of the scaled optical scatter
  bool singular_value_warning = false;
};

namespace detail {

// Rank of a centered 3xN spread, relative to its largest singular value.
inline int spread_rank(const Mat3& scatter, double rel = 1e-10) {
  Eigen::JacobiSVD<Mat3> svd(scatter);
  const Vec3 s = svd.singularValues();
  if (!(s(0) > 0.0)) return 0;
  int r = 0;
  for (int i = 0; i < 3; ++i) r += s(i) > rel * s(0);
  return r;
}

}  // namespace detail

/// Least-squares rotation and translation mapping scale * optical onto radar.
/// Rotation from the SVD of H = sum (r - mean_r)(S o - S mean_o)^T as U V^T,
/// with the last column of V negated when that would be a reflection.
inline RigidCalibration kabsch_register(std::span<const Point3> optical, std::span<const Point3> radar, double scale,
                                        KabschDiagnostics* diag = nullptr) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("scale must be positive");
  if (optical.size() != radar.size()) throw ValidationError("correspondence lists differ in length");
  if (optical.size() < 3) throw DegenerateGeometry("registration needs at least 3 pairs");
  const Point3 co = centroid(optical), cr = centroid(radar);

  Mat3 h = Mat3::Zero(), so = Mat3::Zero(), sr = Mat3::Zero();
  for (std::size_t i = 0; i < optical.size(); ++i) {
    const Vec3 o = scale * (optical[i] - co);
    const Vec3 r = radar[i] - cr;
    h.noalias() += r * o.transpose();
    so.noalias() += o * o.transpose();
    sr.noalias() += r * r.transpose();
  }
  if (detail::spread_rank(so) < 2 || detail::spread_rank(sr) < 2 || detail::spread_rank(h) < 2) {
    throw DegenerateGeometry("correspondences are collinear or coincident");
  }

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) v.col(2) = -v.col(2);

  RigidCalibration calib;
  calib.transform.rotation = u * v.transpose();
  calib.transform.scale = scale;
  calib.transform.translation = cr - calib.transform.rotation * (scale * co);

  double ss = 0.0;
  for (std::size_t i = 0; i < optical.size(); ++i) {
    const double r = (apply_transform(calib.transform, optical[i]) - radar[i]).norm();
    calib.per_point_residuals.push_back(r);
    ss += r * r;
  }
  calib.residual_rmse = std::sqrt(ss / static_cast<double>(optical.size()));

  if (diag) {
    // A perfect fit has H = R * scatter(S o), so both carry the same singular values.
    Eigen::JacobiSVD<Mat3> se(so);
    diag->singular_values = svd.singularValues();
    diag->expected_singular_values = se.singularValues();
    const double top = std::max(diag->expected_singular_values(0), 1e-300);
    diag->singular_value_warning =
        (diag->singular_values - diag->expected_singular_values).cwiseAbs().maxCoeff() > 0.1 * top;
  }
  return calib;
}

inline RigidCalibration kabsch_register(const CorrespondenceSet& pairs, double scale, KabschDiagnostics* diag = nullptr) {
  return kabsch_register(pairs.optical, pairs.radar, scale, diag);
}

// ---------------------------------------------------------------------------
// Refinement on a planar plate
// ---------------------------------------------------------------------------

struct RefineParams {
  int iterations = 100;
  double corr_gate = 0.01;
  double t_inl = 0.05;
  int min_correspondences = 20;
  // re-association passes; each pass pairs points under the latest estimate
  int rounds = 1;
};

struct RefineResult {
  RigidCalibration calibration;
  std::size_t correspondences = 0;
  std::size_t inliers = 0;
  double inlier_ratio = 0.0;
  double rmse_initial = 0.0;  // on the final correspondence set, under the initial transform
  double rmse_refined = 0.0;  // on the final inliers, under the refined transform
};

/// Radar points go through the inverse calibration into the optical frame,
/// are projected and rounded to the nearest pixel, and are paired with the
/// back-projected depth at that pixel if the 3D gap is below corr_gate.
inline CorrespondenceSet projective_correspondences(const RigidTransform& optical_to_radar,
                                                    const DepthCapture& capture, const RadarCloud& cloud,
                                                    double corr_gate) {
  const RigidTransform inv = invert(optical_to_radar);
  CorrespondenceSet set;
  set.source = CorrespondenceSource::kProjectiveRefinement;
  for (const auto& pr : cloud.points) {
    const Point3 po = apply_transform(inv, pr);
    if (!(po.z() > 0.0)) continue;
    const Eigen::Vector2d px = capture.intrinsics.project(po);
    const double ur = std::round(px.x()), vr = std::round(px.y());
    if (!(ur >= 0 && vr >= 0 && ur < capture.width && vr < capture.height)) continue;
    const int u = static_cast<int>(ur), v = static_cast<int>(vr);
    const float z = capture.depth_at(u, v);
    if (!(z > 0.f)) continue;
    // optical points live in the optical frame at optical units; compare after scaling
    const Point3 q = capture.intrinsics.backproject(u, v, z);
    if ((optical_to_radar.scale * (q - po)).norm() >= corr_gate) continue;
    set.optical.push_back(q);
    set.radar.push_back(pr);
  }
  return set;
}

namespace detail {

inline SampleScore score_pairs(const RigidTransform& T, const CorrespondenceSet& set, double gate,
                               std::vector<std::size_t>* inliers = nullptr) {
  std::size_t count = 0;
  double ss = 0.0;
  if (inliers) inliers->clear();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double d2 = (apply_transform(T, set.optical[i]) - set.radar[i]).squaredNorm();
    if (d2 < gate * gate) {
      ++count;
      ss += d2;
      if (inliers) inliers->push_back(i);
    }
  }
  SampleScore s;
  s.inlier_ratio = set.size() ? static_cast<double>(count) / static_cast<double>(set.size()) : 0.0;
  s.error = count ? std::sqrt(ss / static_cast<double>(count)) : std::numeric_limits<double>::infinity();
  return s;
}

}  // namespace detail

/// RANSAC-Kabsch on projective plate correspondences. A planar surface only
/// constrains its normal offset and tilt; in-plane motion is unobservable and
/// stays at the initial estimate.
inline RefineResult refine_calibration(const RigidCalibration& initial, const DepthCapture& capture,
                                       const RadarCloud& cloud, const RefineParams& p, std::uint64_t seed) {
  initial.transform.validate();
  Rng rng(seed);
  RigidTransform current = initial.transform;
  RefineResult out;
  CorrespondenceSet set;
  std::vector<std::size_t> inl;

  for (int round = 0; round < std::max(1, p.rounds); ++round) {
    set = projective_correspondences(current, capture, cloud, p.corr_gate);
    if (static_cast<int>(set.size()) < p.min_correspondences) {
      throw InsufficientCorrespondences("only " + std::to_string(set.size()) +
                                        " projective correspondences within the gate");
    }
    // the current estimate competes as the first hypothesis
    SampleScore best = detail::score_pairs(current, set, p.corr_gate);
    RigidTransform best_t = current;
    std::vector<std::size_t> pick;
    PointList so(4), sr(4);
    for (int it = 0; it < p.iterations; ++it) {
      sample_distinct(rng, set.size(), 4, pick);
      for (int k = 0; k < 4; ++k) {
        so[k] = set.optical[pick[k]];
        sr[k] = set.radar[pick[k]];
      }
      RigidTransform cand;
      try {
        cand = kabsch_register(so, sr, current.scale).transform;
      } catch (const DegenerateGeometry&) {
        continue;
      }
      const auto s = detail::score_pairs(cand, set, p.corr_gate);
      if (accept_candidate(s, best, p.t_inl)) {
        best = s;
        best_t = cand;
      }
    }
    detail::score_pairs(best_t, set, p.corr_gate, &inl);
    if (inl.size() < 3) break;
    PointList io, ir;
    for (auto i : inl) {
      io.push_back(set.optical[i]);
      ir.push_back(set.radar[i]);
    }
    try {
      current = kabsch_register(io, ir, current.scale).transform;
    } catch (const DegenerateGeometry&) {
      current = best_t;
    }
  }

  const auto final_score = detail::score_pairs(current, set, p.corr_gate, &inl);
  out.correspondences = set.size();
  out.inliers = inl.size();
  out.inlier_ratio = final_score.inlier_ratio;
  out.rmse_refined = final_score.error;
  out.rmse_initial = detail::score_pairs(initial.transform, set, std::numeric_limits<double>::infinity()).error;

  out.calibration.transform = current;
  double ss = 0.0;
  for (auto i : inl) {
    const double r = (apply_transform(current, set.optical[i]) - set.radar[i]).norm();
    out.calibration.per_point_residuals.push_back(r);
    ss += r * r;
  }
  out.calibration.residual_rmse = inl.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(inl.size()));
  return out;
}

}  // namespace nfcalib
