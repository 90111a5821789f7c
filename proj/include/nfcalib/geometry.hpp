#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "nfcalib/errors.hpp"

namespace nfcalib {

using Point3 = Eigen::Vector3d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using PointList = std::vector<Point3>;

inline bool is_finite(const Point3& p) { return p.allFinite(); }

// Similarity restricted to a proper rotation: p -> rotation * (scale * p) + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  static RigidTransform identity() { return {}; }

  bool is_valid(double tol = 1e-9) const {
    if (!rotation.allFinite() || !translation.allFinite() || !std::isfinite(scale)) return false;
    if (scale <= 0.0) return false;
    const Mat3 gram = rotation.transpose() * rotation;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(rotation.determinant() - 1.0) <= tol;
  }

  void validate() const {
    if (!is_valid()) throw ValidationError("rigid transform violates rotation/scale invariants");
  }
};

inline Point3 apply_transform(const RigidTransform& T, const Point3& p) {
  return T.rotation * (T.scale * p) + T.translation;
}

inline PointList apply_transform(const RigidTransform& T, std::span<const Point3> points) {
  PointList out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(apply_transform(T, p));
  return out;
}

inline RigidTransform invert(const RigidTransform& T) {
  RigidTransform inv;
  inv.rotation = T.rotation.transpose();
  inv.scale = 1.0 / T.scale;
  inv.translation = -(inv.rotation * T.translation) * inv.scale;
  return inv;
}

// compose(a, b) applies b first, then a.
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.scale = a.scale * b.scale;
  out.translation = a.rotation * (a.scale * b.translation) + a.translation;
  return out;
}

inline Mat3 rotation_xyz_deg(double rx, double ry, double rz) {
  constexpr double k = std::numbers::pi / 180.0;
  return (Eigen::AngleAxisd(rz * k, Vec3::UnitZ()) * Eigen::AngleAxisd(ry * k, Vec3::UnitY()) *
          Eigen::AngleAxisd(rx * k, Vec3::UnitX()))
      .toRotationMatrix();
}

// Geodesic angle between two rotations, in degrees.
inline double rotation_angle_deg(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

struct Plane {
  Vec3 normal = Vec3::UnitZ();
  Point3 reference_point = Point3::Zero();

  bool is_valid(double tol = 1e-9) const {
    return normal.allFinite() && reference_point.allFinite() && std::abs(normal.norm() - 1.0) <= tol;
  }
};

struct SphereModel {
  Point3 center = Point3::Zero();
  double radius = 1.0;
};

inline double point_plane_distance(const Point3& p, const Plane& pl) {
  return (p - pl.reference_point).dot(pl.normal);
}

inline Point3 project_onto_plane(const Point3& c, const Plane& pl) {
  return c - pl.normal * point_plane_distance(c, pl);
}

// Sensor frames look along +z, so plane normals are oriented toward the sensor
// (z <= 0). Normals lying in the image plane are oriented toward +x, then +y.
inline Vec3 canonical_normal(Vec3 n) {
  constexpr double tie = 1e-12;
  bool flip = false;
  if (std::abs(n.z()) > tie) {
    flip = n.z() > 0.0;
  } else if (std::abs(n.x()) > tie) {
    flip = n.x() < 0.0;
  } else {
    flip = n.y() < 0.0;
  }
  return flip ? Vec3(-n) : n;
}

// Total least squares plane: through the centroid, normal along the direction
// of least variance of the centered points.
inline Plane fit_plane_tls(std::span<const Point3> points) {
  if (points.size() < 3) throw DegenerateGeometry("plane fit needs at least 3 points");
  Point3 centroid = Point3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());

  Mat3 scatter = Mat3::Zero();
  for (const auto& p : points) {
    const Vec3 d = p - centroid;
    scatter.noalias() += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  const Vec3& ev = eig.eigenvalues();  // ascending
  if (!(ev(2) > 0.0) || ev(1) <= 1e-12 * ev(2)) {
    throw DegenerateGeometry("plane fit input is collinear or coincident");
  }
  Plane pl;
  pl.normal = canonical_normal(eig.eigenvectors().col(0).normalized());
  pl.reference_point = centroid;
  return pl;
}

inline Point3 centroid(std::span<const Point3> points) {
  Point3 c = Point3::Zero();
  for (const auto& p : points) c += p;
  return points.empty() ? c : Point3(c / static_cast<double>(points.size()));
}

}  // namespace nfcalib
