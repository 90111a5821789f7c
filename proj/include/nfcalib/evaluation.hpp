#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "nfcalib/errors.hpp"
#include "nfcalib/geometry.hpp"
#include "nfcalib/io.hpp"

namespace nfcalib {

/// Exact nearest-neighbor distances into a fixed cloud. Uses a uniform grid
/// with cell size near the mean point spacing; clouds below
/// `brute_force_below` points are scanned directly. Both paths compute the
/// same squared distances, so results are bit-identical.
class NearestNeighbor {
 public:
  explicit NearestNeighbor(std::span<const Point3> cloud, std::size_t brute_force_below = 500)
      : pts_(cloud.begin(), cloud.end()) {
    if (pts_.empty()) throw EmptyInput("nearest-neighbor cloud is empty");
    if (pts_.size() < brute_force_below) return;
    lo_ = hi_ = pts_.front();
    for (const auto& p : pts_) {
      lo_ = lo_.cwiseMin(p);
      hi_ = hi_.cwiseMax(p);
    }
    cell_ = spacing_estimate();
    for (int k = 0; k < 3; ++k) {
      dims_[k] = static_cast<std::int64_t>(std::floor((hi_(k) - lo_(k)) / cell_)) + 1;
    }
    for (std::size_t i = 0; i < pts_.size(); ++i) grid_[key(cell_of(pts_[i]))].push_back(static_cast<std::uint32_t>(i));
    gridded_ = true;
  }

  double squared_distance(const Point3& q) const {
    if (!gridded_) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : pts_) best = std::min(best, (p - q).squaredNorm());
      return best;
    }
    const auto c = cell_of_unclamped(q);
    // Chebyshev ring bounds for the grid box relative to the query cell
    std::int64_t k_lo = 0, k_hi = 0;
    for (int a = 0; a < 3; ++a) {
      const std::int64_t below = -c[a], above = c[a] - (dims_[a] - 1);
      k_lo = std::max({k_lo, below, above});
      k_hi = std::max({k_hi, std::abs(c[a]), std::abs(c[a] - (dims_[a] - 1))});
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::int64_t k = k_lo; k <= k_hi; ++k) {
      visit_ring(c, k, [&](std::uint32_t i) { best = std::min(best, (pts_[i] - q).squaredNorm()); });
      // any point in ring k+1 or beyond is at least k cells away
      const double bound = static_cast<double>(k) * cell_;
      if (best <= bound * bound) break;
    }
    return best;
  }

  double distance(const Point3& q) const { return std::sqrt(squared_distance(q)); }

  std::size_t size() const { return pts_.size(); }
  bool uses_grid() const { return gridded_; }

 private:
  using Cell = std::array<std::int64_t, 3>;

  double spacing_estimate() const {
    std::array<double, 3> e{hi_(0) - lo_(0), hi_(1) - lo_(1), hi_(2) - lo_(2)};
    std::sort(e.begin(), e.end(), std::greater<>());
    const double n = static_cast<double>(pts_.size());
    double h = 0.0;
    if (e[2] > 0.1 * e[1] && e[2] > 0.0) {
      h = std::cbrt(e[0] * e[1] * e[2] / n);
    } else if (e[1] > 0.1 * e[0] && e[1] > 0.0) {
      h = std::sqrt(e[0] * e[1] / n);
    } else {
      h = e[0] / n;
    }
    // keep the grid bounded: at most ~64 cells per point along the longest axis
    h = std::max(h, e[0] / (64.0 * n));
    return h > 0.0 && std::isfinite(h) ? h : 1.0;
  }

  Cell cell_of_unclamped(const Point3& p) const {
    Cell c;
    for (int k = 0; k < 3; ++k) {
      const double f = std::floor((p(k) - lo_(k)) / cell_);
      c[k] = static_cast<std::int64_t>(std::clamp(f, -1e12, 1e12));
    }
    return c;
  }
  Cell cell_of(const Point3& p) const {
    Cell c = cell_of_unclamped(p);
    for (int k = 0; k < 3; ++k) c[k] = std::clamp<std::int64_t>(c[k], 0, dims_[k] - 1);
    return c;
  }
  // Wrapping is harmless: a collision only adds real points to a bucket.
  std::uint64_t key(const Cell& c) const {
    const auto u = [](std::int64_t v) { return static_cast<std::uint64_t>(v); };
    return (u(c[2]) * u(dims_[1]) + u(c[1])) * u(dims_[0]) + u(c[0]);
  }

  template <typename F>
  void visit_ring(const Cell& c, std::int64_t k, F&& f) const {
    const std::int64_t x0 = std::max<std::int64_t>(c[0] - k, 0), x1 = std::min(c[0] + k, dims_[0] - 1);
    const std::int64_t y0 = std::max<std::int64_t>(c[1] - k, 0), y1 = std::min(c[1] + k, dims_[1] - 1);
    const std::int64_t z0 = std::max<std::int64_t>(c[2] - k, 0), z1 = std::min(c[2] + k, dims_[2] - 1);
    for (std::int64_t z = z0; z <= z1; ++z) {
      for (std::int64_t y = y0; y <= y1; ++y) {
        const bool inner_yz = std::abs(z - c[2]) < k && std::abs(y - c[1]) < k;
        for (std::int64_t x = x0; x <= x1; ++x) {
          if (inner_yz && std::abs(x - c[0]) < k) {
            // jump to the far face of the ring
            x = std::max(x, c[0] + k - 1);
            continue;
          }
          const auto it = grid_.find(key({x, y, z}));
          if (it == grid_.end()) continue;
          for (auto i : it->second) f(i);
        }
      }
    }
  }

  PointList pts_;
  bool gridded_ = false;
  Point3 lo_ = Point3::Zero(), hi_ = Point3::Zero();
  double cell_ = 1.0;
  std::array<std::int64_t, 3> dims_{1, 1, 1};
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> grid_;
};

/// sqrt(mean over a in A of min over b in B of |a - b|^2).
inline double directed_rmse(std::span<const Point3> a, std::span<const Point3> b) {
  if (a.empty() || b.empty()) throw EmptyInput("directed RMSE needs two non-empty clouds");
  const NearestNeighbor nn(b);
  double ss = 0.0;
  for (const auto& p : a) ss += nn.squared_distance(p);
  return std::sqrt(ss / static_cast<double>(a.size()));
}

inline double chamfer_distance(std::span<const Point3> a, std::span<const Point3> b) {
  return 0.5 * directed_rmse(a, b) + 0.5 * directed_rmse(b, a);
}

struct ExtrinsicError {
  double translation = 0.0;   // meters
  double rotation_deg = 0.0;  // geodesic angle
};

inline ExtrinsicError extrinsic_error(const RigidTransform& estimate, const RigidTransform& truth) {
  return {(estimate.translation - truth.translation).norm(), rotation_angle_deg(estimate.rotation, truth.rotation)};
}

struct ResidualCloud {
  PointList points;  // radar points
  std::vector<double> residuals;

  PlyData to_ply() const {
    PlyData ply;
    ply.comments.push_back("units m");
    std::vector<double> x, y, z;
    for (const auto& p : points) {
      x.push_back(p.x());
      y.push_back(p.y());
      z.push_back(p.z());
    }
    ply.add("x", std::move(x));
    ply.add("y", std::move(y));
    ply.add("z", std::move(z));
    ply.add("residual", residuals);
    return ply;
  }
};

/// Maps the optical cloud into the radar frame and attaches to each radar
/// point the distance to its nearest mapped optical point.
inline ResidualCloud residual_export(std::span<const Point3> optical, std::span<const Point3> radar,
                                     const RigidCalibration& calib) {
  calib.transform.validate();
  if (optical.empty() || radar.empty()) throw EmptyInput("residual export needs two non-empty clouds");
  const PointList mapped = apply_transform(calib.transform, optical);
  const NearestNeighbor nn(mapped);
  ResidualCloud out;
  out.points.assign(radar.begin(), radar.end());
  for (const auto& p : radar) out.residuals.push_back(nn.distance(p));
  return out;
}

struct CloudMetrics {
  double chamfer = 0.0;
  double rmse_optical_to_radar = 0.0;
  double rmse_radar_to_optical = 0.0;
  double inlier_fraction = 0.0;  // radar points within inlier_distance of the optical cloud
  std::size_t optical_points = 0, radar_points = 0;
};

// Optical points must already be in the radar frame.
inline CloudMetrics cloud_metrics(std::span<const Point3> optical, std::span<const Point3> radar,
                                  double inlier_distance = 0.002) {
  CloudMetrics m;
  m.rmse_optical_to_radar = directed_rmse(optical, radar);
  m.rmse_radar_to_optical = directed_rmse(radar, optical);
  m.chamfer = chamfer_distance(optical, radar);
  const NearestNeighbor nn(optical);
  std::size_t in = 0;
  for (const auto& p : radar) in += nn.squared_distance(p) < inlier_distance * inlier_distance;
  m.inlier_fraction = static_cast<double>(in) / static_cast<double>(radar.size());
  m.optical_points = optical.size();
  m.radar_points = radar.size();
  return m;
}

// All valid depth pixels back-projected into the optical frame.
inline PointList depth_to_points(const DepthCapture& capture) {
  PointList out;
  for (int v = 0; v < capture.height; ++v) {
    for (int u = 0; u < capture.width; ++u) {
      const float z = capture.depth_at(u, v);
      if (z > 0.f) out.push_back(capture.intrinsics.backproject(u, v, z));
    }
  }
  return out;
}

}  // namespace nfcalib
