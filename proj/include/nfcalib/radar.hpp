#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "nfcalib/errors.hpp"
#include "nfcalib/geometry.hpp"
#include "nfcalib/io.hpp"
#include "nfcalib/optical.hpp"
#include "nfcalib/ransac.hpp"
#include "nfcalib/target.hpp"

namespace nfcalib {

// ---------------------------------------------------------------------------
// Cluster detection
// ---------------------------------------------------------------------------

struct ClusterParams {
  double t_db = 15.0;
  double t_min = 0.02;
  double t_max = 0.30;
  int n_clusters = 20;
  int m_samples = 7;
};

struct ClusterSet {
  PointList centers;
  std::vector<double> mean_confidence;
  std::vector<int> member_counts;
  std::vector<std::size_t> seed_index;            // cloud index of each cluster's seed
  std::vector<std::vector<std::size_t>> members;  // cloud indices, seed first

  std::size_t size() const { return centers.size(); }
};

/// Greedy NMS clustering. Points more than t_db below the peak are dropped;
/// the brightest unsuppressed point becomes a seed unless it is farther than
/// t_max from every earlier seed, and suppresses everything within t_min.
/// Remaining points then join their nearest seed in confidence order until
/// each cluster holds M members; only points within t_min of that seed may
/// join, so a cluster never absorbs a neighbor's scatter.
inline ClusterSet detect_clusters(const RadarCloud& cloud, const ClusterParams& p = {}) {
  if (cloud.points.empty()) throw EmptyInput("radar cloud is empty");
  if (p.n_clusters < 1 || p.m_samples < 1 || !(p.t_min > 0.0) || !(p.t_max > p.t_min)) {
    throw ValidationError("invalid cluster parameters");
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (cloud.amplitude_db[i] >= -p.t_db) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cloud.confidence[a] > cloud.confidence[b]; });

  const double tmin2 = p.t_min * p.t_min, tmax2 = p.t_max * p.t_max;
  std::vector<char> taken(order.size(), 0);  // suppressed or seeded
  std::vector<std::size_t> seeds;            // positions in `order`
  for (std::size_t k = 0; k < order.size() && static_cast<int>(seeds.size()) < p.n_clusters; ++k) {
    if (taken[k]) continue;
    const Point3& q = cloud.points[order[k]];
    if (!seeds.empty()) {
      double best = std::numeric_limits<double>::infinity();
      for (auto s : seeds) best = std::min(best, (cloud.points[order[s]] - q).squaredNorm());
      if (best > tmax2) continue;
    }
    seeds.push_back(k);
    taken[k] = 1;
    for (std::size_t j = k + 1; j < order.size(); ++j) {
      if (!taken[j] && (cloud.points[order[j]] - q).squaredNorm() <= tmin2) taken[j] = 2;
    }
  }
  if (seeds.size() < 5) {
    throw InsufficientClusters("only " + std::to_string(seeds.size()) + " clusters above -" +
                               std::to_string(p.t_db) + " dB");
  }

  ClusterSet out;
  out.members.resize(seeds.size());
  for (std::size_t c = 0; c < seeds.size(); ++c) out.members[c].push_back(order[seeds[c]]);
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (taken[k] == 1) continue;
    const Point3& q = cloud.points[order[k]];
    std::size_t nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < seeds.size(); ++c) {
      const double d = (cloud.points[order[seeds[c]]] - q).squaredNorm();
      if (d < best) {
        best = d;
        nearest = c;
      }
    }
    if (best <= tmin2 && static_cast<int>(out.members[nearest].size()) < p.m_samples) {
      out.members[nearest].push_back(order[k]);
    }
  }
  for (const auto& m : out.members) {
    Point3 c = Point3::Zero();
    double conf = 0.0;
    for (auto i : m) {
      c += cloud.points[i];
      conf += cloud.confidence[i];
    }
    out.centers.push_back(c / static_cast<double>(m.size()));
    out.mean_confidence.push_back(conf / static_cast<double>(m.size()));
    out.member_counts.push_back(static_cast<int>(m.size()));
    out.seed_index.push_back(m.front());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Energy
// ---------------------------------------------------------------------------

struct EnergyWeights {
  double alpha = 2.0;
  double beta = 2.0;
  double gamma = 4.0;
};

struct EnergyTerms {
  double total = 0.0;
  double data = 0.0;
  double sphere = 0.0;
  double plane = 0.0;
  double anchor = 0.0;
};

// Board normal oriented like the target frame's z axis: right x down, i.e.
// from the corner balls toward the board. Only depends on the corner order.
inline Vec3 board_facing_normal(const std::array<Point3, 4>& corners, const Vec3& n) {
  const Vec3 z = (corners[kTopRight] - corners[kTopLeft]).cross(corners[kBottomLeft] - corners[kTopLeft]);
  return z.dot(n) < 0.0 ? Vec3(-n) : n;
}

/// Energy of one candidate: four ordered corners, the anchor and the plane
/// fitted to the corners.
///
/// Pair term: sum over corner pairs of ||p_i - p_j| - d_ij| on the
/// plane-projected corners, in meters.
inline EnergyTerms evaluate_energy(const std::array<Point3, 4>& corners, const Point3& anchor, const Plane& plane,
                                   const TargetGeometry& geom, const EnergyWeights& w) {
  EnergyTerms e;
  std::array<Point3, 4> proj;
  Point3 mean = Point3::Zero();
  for (int i = 0; i < 4; ++i) {
    e.data += std::abs(point_plane_distance(corners[i], plane));
    proj[i] = project_onto_plane(corners[i], plane);
    mean += 0.25 * corners[i];
  }
  const auto d = geom.pairwise_distances();
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) e.sphere += std::abs((proj[i] - proj[j]).norm() - d(i, j));
  }
  const Vec3 n_board = board_facing_normal(corners, plane.normal);
  for (int i = 0; i < 4; ++i) e.plane += std::abs((anchor - corners[i]).dot(n_board) - geom.board_offset);
  e.anchor = (project_onto_plane(anchor, plane) - mean).norm();
  e.total = e.data + w.alpha * e.sphere + w.beta * e.plane + w.gamma * e.anchor;
  return e;
}

// ---------------------------------------------------------------------------
// Localization
// ---------------------------------------------------------------------------

struct LocalizeParams {
  EnergyWeights weights;
  double t_inl = 0.05;
  double plane_eps = 0.003;
  double energy_reject = 0.05;
  bool anchor_in_inliers = true;
  Vec3 up = Vec3(0, -1, 0);
  Vec3 right = Vec3(1, 0, 0);
};

struct RadarTarget {
  std::array<Point3, 4> corners;
  Point3 anchor = Point3::Zero();
  Plane board_plane;  // plane through the corner balls
  EnergyTerms energy;
  double inlier_ratio = 0.0;
  double plane_residual = 0.0;               // max |corner distance| to board_plane
  std::array<std::size_t, 4> corner_cluster{};  // cluster index per ordered corner
  std::size_t anchor_cluster = 0;
  std::size_t candidates_evaluated = 0;
};

namespace detail {

struct RadarCandidate {
  std::array<Point3, 4> corners;
  std::array<std::size_t, 4> corner_cluster;
  std::size_t anchor_cluster;
  Plane plane;
  EnergyTerms energy;
  SampleScore score;
};

inline bool next_combination(std::array<std::size_t, 5>& idx, std::size_t n) {
  int i = 4;
  while (i >= 0 && idx[i] == n - 5 + static_cast<std::size_t>(i)) --i;
  if (i < 0) return false;
  ++idx[i];
  for (int j = i + 1; j < 5; ++j) idx[j] = idx[j - 1] + 1;
  return true;
}

}  // namespace detail

/// Exhaustive search over all 5-subsets of cluster centers and all choices of
/// the anchor within a subset. Candidates are compared with the inlier-ratio
/// acceptance rule on (k, E); the enumeration is lexicographic, so earlier
/// index tuples win exact ties.
inline RadarTarget localize_radar_target(const ClusterSet& clusters, const TargetGeometry& geom,
                                         const LocalizeParams& p = {}) {
  const std::size_t n = clusters.size();
  if (n < 5) throw InsufficientClusters("localization needs at least 5 clusters");
  geom.validate();

  detail::RadarCandidate best;
  std::size_t evaluated = 0;
  std::array<std::size_t, 5> idx{0, 1, 2, 3, 4};
  bool done = false;
  do {
    for (int a = 0; a < 5 && !done; ++a) {
      std::array<Point3, 4> raw;
      std::array<std::size_t, 4> raw_idx;
      for (int i = 0, k = 0; i < 5; ++i) {
        if (i == a) continue;
        raw_idx[k] = idx[i];
        raw[k++] = clusters.centers[idx[i]];
      }
      const Point3& anchor = clusters.centers[idx[a]];
      Plane plane;
      OrderedCorners ordered;
      try {
        plane = fit_plane_tls(raw);
        ordered = order_centers(raw, p.up, p.right);
      } catch (const DegenerateGeometry&) {
        continue;
      } catch (const AmbiguousOrdering&) {
        continue;
      }
      ++evaluated;
      const auto e = evaluate_energy(ordered.centers, anchor, plane, geom, p.weights);

      int inl = 0;
      for (const auto& c : ordered.centers) inl += std::abs(point_plane_distance(c, plane)) < p.plane_eps;
      if (p.anchor_in_inliers) {
        const Vec3 nb = board_facing_normal(ordered.centers, plane.normal);
        inl += std::abs((anchor - plane.reference_point).dot(nb) - geom.board_offset) < p.plane_eps;
      }
      SampleScore s{static_cast<double>(inl) / (p.anchor_in_inliers ? 5.0 : 4.0), e.total};
      if (accept_candidate(s, best.score, p.t_inl)) {
        best.corners = ordered.centers;
        for (int i = 0; i < 4; ++i) best.corner_cluster[i] = raw_idx[ordered.source_index[i]];
        best.anchor_cluster = idx[a];
        best.plane = plane;
        best.energy = e;
        best.score = s;
        // nothing can beat a perfect candidate under the acceptance rule
        done = s.inlier_ratio == 1.0 && e.total == 0.0;
      }
    }
  } while (!done && detail::next_combination(idx, n));

  if (best.score.empty()) throw LocalizationFailed("no 5-subset of clusters forms a usable target candidate");
  if (best.energy.total > p.energy_reject) {
    std::ostringstream os;
    os << "best candidate energy " << best.energy.total << " exceeds " << p.energy_reject << " (data "
       << best.energy.data << ", sphere " << best.energy.sphere << ", plane " << best.energy.plane << ", anchor "
       << best.energy.anchor << ", inlier ratio " << best.score.inlier_ratio << ")";
    throw LocalizationFailed(os.str());
  }

  RadarTarget t;
  t.corners = best.corners;
  t.anchor = clusters.centers[best.anchor_cluster];
  t.board_plane = best.plane;
  t.energy = best.energy;
  t.inlier_ratio = best.score.inlier_ratio;
  for (const auto& c : t.corners) t.plane_residual = std::max(t.plane_residual, std::abs(point_plane_distance(c, t.board_plane)));
  t.corner_cluster = best.corner_cluster;
  t.anchor_cluster = best.anchor_cluster;
  t.candidates_evaluated = evaluated;
  return t;
}

}  // namespace nfcalib
