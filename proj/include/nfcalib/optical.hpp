#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nfcalib/errors.hpp"
#include "nfcalib/geometry.hpp"
#include "nfcalib/io.hpp"
#include "nfcalib/ransac.hpp"
#include "nfcalib/target.hpp"

namespace nfcalib {

// ---------------------------------------------------------------------------
// Circle detection
// ---------------------------------------------------------------------------

struct CircleCandidate {
  Eigen::Vector2d center_px = Eigen::Vector2d::Zero();
  double radius_px = 0.0;
  double score = 0.0;
};

struct HoughParams {
  double min_radius_px = 8.0;
  double max_radius_px = 80.0;
  double edge_percentile = 0.9;
  // Edges below this Sobel magnitude (meters per pixel, x8 Sobel gain) are ignored even above the percentile.
  double min_edge_gradient = 0.004;
  double min_center_distance_px = 6.0;
  double min_votes = 20.0;
  int max_candidates = 32;
  // half-width of the median prefilter on depth; 0 disables it
  int median_half_width = 2;
};

namespace detail {

struct GradientField {
  int width = 0, height = 0;
  std::vector<float> gx, gy, mag;
};

inline GradientField sobel(const std::vector<float>& img, int w, int h) {
  GradientField g{w, h, std::vector<float>(img.size(), 0.f), std::vector<float>(img.size(), 0.f),
                  std::vector<float>(img.size(), 0.f)};
  auto at = [&](int u, int v) { return img[static_cast<std::size_t>(v) * w + u]; };
  for (int v = 1; v + 1 < h; ++v) {
    for (int u = 1; u + 1 < w; ++u) {
      const float dx = (at(u + 1, v - 1) + 2 * at(u + 1, v) + at(u + 1, v + 1)) -
                       (at(u - 1, v - 1) + 2 * at(u - 1, v) + at(u - 1, v + 1));
      const float dy = (at(u - 1, v + 1) + 2 * at(u, v + 1) + at(u + 1, v + 1)) -
                       (at(u - 1, v - 1) + 2 * at(u, v - 1) + at(u + 1, v - 1));
      const std::size_t i = static_cast<std::size_t>(v) * w + u;
      g.gx[i] = dx;
      g.gy[i] = dy;
      g.mag[i] = std::sqrt(dx * dx + dy * dy);
    }
  }
  return g;
}

inline double percentile_of_positive(const std::vector<float>& values, double q) {
  std::vector<float> pos;
  pos.reserve(values.size());
  for (float v : values) {
    if (v > 0.f) pos.push_back(v);
  }
  if (pos.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(std::clamp(q, 0.0, 1.0) * static_cast<double>(pos.size() - 1));
  std::nth_element(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(k), pos.end());
  return pos[k];
}

// Square-window median; the window is cropped at the image border.
inline std::vector<float> median_filter(const std::vector<float>& img, int w, int h, int k) {
  std::vector<float> out(img.size());
  std::vector<float> win;
  win.reserve(static_cast<std::size_t>((2 * k + 1) * (2 * k + 1)));
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      win.clear();
      for (int dv = std::max(0, v - k); dv <= std::min(h - 1, v + k); ++dv) {
        for (int du = std::max(0, u - k); du <= std::min(w - 1, u + k); ++du) {
          win.push_back(img[static_cast<std::size_t>(dv) * w + du]);
        }
      }
      const auto mid = win.begin() + static_cast<std::ptrdiff_t>(win.size() / 2);
      std::nth_element(win.begin(), mid, win.end());
      out[static_cast<std::size_t>(v) * w + u] = *mid;
    }
  }
  return out;
}

}  // namespace detail

/// Two-stage circle Hough on the depth map clamped to [0, max_range]: centers
/// are voted along the inward gradient direction of strong edges, then each
/// center peak gets its radius from a histogram of edge distances. Invalid
/// depth counts as max_range. Result is sorted by accumulator score.
inline std::vector<CircleCandidate> detect_circles(const DepthCapture& capture, double max_range = 1.0,
                                                   const HoughParams& params = {}) {
  if (!(max_range > 0.0)) throw ValidationError("max_range must be positive");
  const int w = capture.width, h = capture.height;
  std::vector<float> clamped(capture.depth.size());
  for (std::size_t i = 0; i < clamped.size(); ++i) {
    const float z = capture.depth[i];
    clamped[i] = (z > 0.f && z < max_range) ? z : static_cast<float>(max_range);
  }
  // grazing-angle depth noise near silhouettes otherwise floods the edge set
  if (params.median_half_width > 0) clamped = detail::median_filter(clamped, w, h, params.median_half_width);
  const auto grad = detail::sobel(clamped, w, h);
  const double thr = std::max(detail::percentile_of_positive(grad.mag, params.edge_percentile), params.min_edge_gradient);

  struct Edge {
    int u, v;
    float dx, dy, mag;
  };
  std::vector<Edge> edges;
  for (int v = 1; v + 1 < h; ++v) {
    for (int u = 1; u + 1 < w; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * w + u;
      if (grad.mag[i] > 0.f && grad.mag[i] >= thr) {
        edges.push_back({u, v, grad.gx[i] / grad.mag[i], grad.gy[i] / grad.mag[i], grad.mag[i]});
      }
    }
  }
  if (edges.empty()) throw NoTargetDetected("no depth edges found");

  // Center accumulation: depth grows away from a sphere's center across its
  // silhouette, so the center lies against the gradient.
  std::vector<float> acc(static_cast<std::size_t>(w) * h, 0.f);
  const int rmin = static_cast<int>(std::floor(params.min_radius_px));
  const int rmax = static_cast<int>(std::ceil(params.max_radius_px));
  for (const auto& e : edges) {
    for (int r = rmin; r <= rmax; ++r) {
      const int cu = static_cast<int>(std::lround(e.u - r * e.dx));
      const int cv = static_cast<int>(std::lround(e.v - r * e.dy));
      if (cu < 0 || cv < 0 || cu >= w || cv >= h) break;
      acc[static_cast<std::size_t>(cv) * w + cu] += 1.f;
    }
  }
  std::vector<float> smooth(acc.size(), 0.f);
  for (int v = 1; v + 1 < h; ++v) {
    for (int u = 1; u + 1 < w; ++u) {
      float s = 0.f;
      for (int dv = -1; dv <= 1; ++dv) {
        for (int du = -1; du <= 1; ++du) s += acc[static_cast<std::size_t>(v + dv) * w + (u + du)];
      }
      smooth[static_cast<std::size_t>(v) * w + u] = s;
    }
  }

  struct Peak {
    int u, v;
    float score;
  };
  std::vector<Peak> peaks;
  for (int v = 2; v + 2 < h; ++v) {
    for (int u = 2; u + 2 < w; ++u) {
      const float s = smooth[static_cast<std::size_t>(v) * w + u];
      if (s < params.min_votes) continue;
      bool is_max = true;
      for (int dv = -1; dv <= 1 && is_max; ++dv) {
        for (int du = -1; du <= 1; ++du) {
          if (du == 0 && dv == 0) continue;
          const float o = smooth[static_cast<std::size_t>(v + dv) * w + (u + du)];
          // strict on one half-plane so plateaus keep exactly one maximum
          if (o > s || (o == s && (dv < 0 || (dv == 0 && du < 0)))) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) peaks.push_back({u, v, s});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.score > b.score; });

  std::vector<Peak> kept;
  const double min_d2 = params.min_center_distance_px * params.min_center_distance_px;
  for (const auto& p : peaks) {
    bool close = false;
    for (const auto& k : kept) {
      const double du = p.u - k.u, dv = p.v - k.v;
      close = close || (du * du + dv * dv < min_d2);
    }
    if (!close) kept.push_back(p);
    if (static_cast<int>(kept.size()) >= params.max_candidates) break;
  }

  std::vector<CircleCandidate> out;
  const int nbins = rmax + 2;
  for (const auto& p : kept) {
    // sub-pixel center from the raw accumulator around the peak
    double su = 0, sv = 0, sw = 0;
    for (int dv = -2; dv <= 2; ++dv) {
      for (int du = -2; du <= 2; ++du) {
        const float a = acc[static_cast<std::size_t>(p.v + dv) * w + (p.u + du)];
        su += a * (p.u + du);
        sv += a * (p.v + dv);
        sw += a;
      }
    }
    const Eigen::Vector2d c = sw > 0 ? Eigen::Vector2d(su / sw, sv / sw) : Eigen::Vector2d(p.u, p.v);

    // radius histogram of radially aligned edges; plain counts, since the
    // board outline has a far larger depth jump than a sphere silhouette
    std::vector<double> hist(nbins, 0.0), hist_r(nbins, 0.0);
    for (const auto& e : edges) {
      const double du = e.u - c.x(), dv = e.v - c.y();
      const double d = std::sqrt(du * du + dv * dv);
      if (d < params.min_radius_px || d > params.max_radius_px) continue;
      if ((du * e.dx + dv * e.dy) / d < 0.9) continue;
      const int b = static_cast<int>(std::lround(d));
      hist[b] += 1.0;
      hist_r[b] += d;
    }
    int best = -1;
    double best_val = 0.0;
    for (int b = 1; b + 1 < nbins; ++b) {
      // normalize by circumference so large radii do not win by perimeter alone
      const double val = (hist[b - 1] + hist[b] + hist[b + 1]) / static_cast<double>(b);
      if (val > best_val) {
        best_val = val;
        best = b;
      }
    }
    if (best < 0) continue;
    const double wsum = hist[best - 1] + hist[best] + hist[best + 1];
    const double radius = (hist_r[best - 1] + hist_r[best] + hist_r[best + 1]) / wsum;
    if (!(radius > 0.0) || c.x() < 0 || c.y() < 0 || c.x() > w - 1 || c.y() > h - 1) continue;
    out.push_back({c, radius, static_cast<double>(p.score)});
  }
  if (out.empty()) throw NoTargetDetected("circle Hough found no candidates");
  std::stable_sort(out.begin(), out.end(),
                   [](const CircleCandidate& a, const CircleCandidate& b) { return a.score > b.score; });
  return out;
}

// ---------------------------------------------------------------------------
// Candidate filtering
// ---------------------------------------------------------------------------

// Per-channel median color over pixels within `fraction` of the circle radius.
inline std::optional<Rgb> median_color(const DepthCapture& capture, const CircleCandidate& c, double fraction = 0.7) {
  const double r = c.radius_px * fraction;
  std::array<std::vector<std::uint8_t>, 3> ch;
  const int u0 = std::max(0, static_cast<int>(std::floor(c.center_px.x() - r)));
  const int u1 = std::min(capture.width - 1, static_cast<int>(std::ceil(c.center_px.x() + r)));
  const int v0 = std::max(0, static_cast<int>(std::floor(c.center_px.y() - r)));
  const int v1 = std::min(capture.height - 1, static_cast<int>(std::ceil(c.center_px.y() + r)));
  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      const double du = u - c.center_px.x(), dv = v - c.center_px.y();
      if (du * du + dv * dv > r * r) continue;
      const auto& px = capture.rgb_at(u, v);
      for (int k = 0; k < 3; ++k) ch[k].push_back(px[k]);
    }
  }
  if (ch[0].empty()) return std::nullopt;
  Rgb m{};
  for (int k = 0; k < 3; ++k) {
    auto mid = ch[k].begin() + static_cast<std::ptrdiff_t>(ch[k].size() / 2);
    std::nth_element(ch[k].begin(), mid, ch[k].end());
    m[k] = *mid;
  }
  return m;
}

inline int color_deviation(const Rgb& a, const Rgb& b) {
  int d = 0;
  for (int k = 0; k < 3; ++k) d = std::max(d, std::abs(static_cast<int>(a[k]) - static_cast<int>(b[k])));
  return d;
}

/// Walks candidates in score order and keeps the first four that match an
/// expected sphere color (skipped when the palette is empty), agree in radius
/// with every circle kept so far, and do not overlap a kept circle.
inline std::vector<CircleCandidate> filter_circles(const std::vector<CircleCandidate>& candidates,
                                                   const DepthCapture& capture, const std::vector<Rgb>& palette,
                                                   double size_tol, double color_tol) {
  std::vector<CircleCandidate> kept;
  std::string reasons;
  for (std::size_t i = 0; i < candidates.size() && kept.size() < 4; ++i) {
    const auto& c = candidates[i];
    std::string why;
    if (!palette.empty()) {
      const auto m = median_color(capture, c);
      bool match = false;
      for (const auto& p : palette) match = match || (m && color_deviation(*m, p) < color_tol);
      if (!match) why = "color";
    }
    if (why.empty()) {
      for (const auto& k : kept) {
        if ((c.center_px - k.center_px).norm() < std::max(c.radius_px, k.radius_px)) {
          why = "overlap";
          break;
        }
        if (std::abs(c.radius_px - k.radius_px) > size_tol * k.radius_px) {
          why = "size";
          break;
        }
      }
    }
    if (why.empty()) {
      kept.push_back(c);
    } else {
      reasons += " #" + std::to_string(i) + ':' + why;
    }
  }
  if (kept.size() < 4) {
    throw NoTargetDetected("only " + std::to_string(kept.size()) + " of 4 sphere circles survived filtering;" +
                           (reasons.empty() ? std::string(" too few candidates") : " rejected" + reasons));
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Back-projection
// ---------------------------------------------------------------------------

struct SphereCloud {
  PointList points;
  std::vector<Vec3> normals;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
};

struct BackprojectParams {
  int min_valid_pixels = 30;
  // neighbors farther apart in depth than this are treated as a discontinuity
  double depth_jump = 0.02;
  // central-difference stencil half-width; 0 picks radius/6
  int normal_step_px = 0;
};

/// Lifts every valid depth pixel inside the circle to 3D. Normals come from
/// central differences of back-projected neighbors, flipped toward the camera;
/// the weight is max(0, <n, -e_dir>) with e_dir = +z.
inline SphereCloud backproject_circle(const DepthCapture& capture, const CircleCandidate& circle,
                                      const BackprojectParams& params = {}) {
  const auto& K = capture.intrinsics;
  const int step = params.normal_step_px > 0
                       ? params.normal_step_px
                       : std::max(1, static_cast<int>(std::lround(circle.radius_px / 6.0)));
  auto point_at = [&](int u, int v) -> std::optional<Point3> {
    if (!capture.contains(u, v)) return std::nullopt;
    const float z = capture.depth_at(u, v);
    if (!(z > 0.f)) return std::nullopt;
    return K.backproject(u, v, z);
  };
  auto neighbor = [&](int u, int v, double z) -> std::optional<Point3> {
    auto p = point_at(u, v);
    if (p && std::abs(p->z() - z) <= params.depth_jump) return p;
    return std::nullopt;
  };
  auto diff = [&](const Point3& p, std::optional<Point3> lo, std::optional<Point3> hi) -> std::optional<Vec3> {
    if (lo && hi) return Vec3(*hi - *lo);
    if (hi) return Vec3(*hi - p);
    if (lo) return Vec3(p - *lo);
    return std::nullopt;
  };

  SphereCloud cloud;
  const double r = circle.radius_px;
  const int u0 = static_cast<int>(std::floor(circle.center_px.x() - r));
  const int u1 = static_cast<int>(std::ceil(circle.center_px.x() + r));
  const int v0 = static_cast<int>(std::floor(circle.center_px.y() - r));
  const int v1 = static_cast<int>(std::ceil(circle.center_px.y() + r));
  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      const double du = u - circle.center_px.x(), dv = v - circle.center_px.y();
      if (du * du + dv * dv > r * r) continue;
      const auto p = point_at(u, v);
      if (!p) continue;
      const auto tu = diff(*p, neighbor(u - step, v, p->z()), neighbor(u + step, v, p->z()));
      const auto tv = diff(*p, neighbor(u, v - step, p->z()), neighbor(u, v + step, p->z()));
      Vec3 n(0, 0, -1);
      double w = 0.0;
      if (tu && tv) {
        const Vec3 c = tu->cross(*tv);
        if (c.norm() > 0.0) {
          n = c.normalized();
          if (n.dot(*p) > 0.0) n = -n;
          w = std::max(0.0, -n.z());
        }
      }
      cloud.points.push_back(*p);
      cloud.normals.push_back(n);
      cloud.weights.push_back(w);
    }
  }
  if (static_cast<int>(cloud.size()) < params.min_valid_pixels) {
    throw InsufficientData("circle contains only " + std::to_string(cloud.size()) + " valid depth pixels");
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Sphere fitting with known radius
// ---------------------------------------------------------------------------

/// Weighted sphere center for known radius r. Seeds from the linearized
/// algebraic form (|c|^2 - r^2 treated as an extra unknown), then runs
/// Gauss-Newton on the geometric residual |c - s| - r. Returns nullopt if the
/// system is singular.
inline std::optional<Point3> fit_sphere_center(std::span<const Point3> pts, std::span<const double> weights, double r,
                                               int gauss_newton_steps = 5) {
  if (pts.size() < 3 || pts.size() != weights.size()) return std::nullopt;
  double wsum = 0.0;
  Point3 mean = Point3::Zero();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    wsum += weights[i];
    mean += weights[i] * pts[i];
  }
  if (!(wsum > 0.0)) return std::nullopt;
  mean /= wsum;

  Point3 c;
  bool seeded = false;
  if (pts.size() >= 4) {
    Eigen::Matrix4d ata = Eigen::Matrix4d::Zero();
    Eigen::Vector4d atb = Eigen::Vector4d::Zero();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Vec3 s = pts[i] - mean;
      const Eigen::Vector4d a(-2 * s.x(), -2 * s.y(), -2 * s.z(), 1.0);
      ata.noalias() += weights[i] * a * a.transpose();
      atb.noalias() += weights[i] * a * (-s.squaredNorm());
    }
    Eigen::FullPivLU<Eigen::Matrix4d> lu(ata);
    if (lu.rank() == 4) {
      const Eigen::Vector4d x = lu.solve(atb);
      const Vec3 cc = x.head<3>();
      const double rad2 = cc.squaredNorm() - x(3);
      if (cc.allFinite() && rad2 > 0.0 && std::abs(std::sqrt(rad2) - r) < r) {
        c = cc + mean;
        seeded = true;
      }
    }
  }
  if (!seeded) {
    // visible surface faces the sensor; the center lies behind it
    const double n = mean.norm();
    c = n > 0.0 ? Point3(mean + r * mean / n) : mean;
  }

  for (int it = 0; it < gauss_newton_steps; ++it) {
    Mat3 jtj = Mat3::Zero();
    Vec3 jtr = Vec3::Zero();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Vec3 d = c - pts[i];
      const double dn = d.norm();
      if (dn <= 0.0) continue;
      const Vec3 j = d / dn;
      jtj.noalias() += weights[i] * j * j.transpose();
      jtr += weights[i] * j * (dn - r);
    }
    Eigen::LDLT<Mat3> ldlt(jtj);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff()))) {
      break;
    }
    const Vec3 delta = ldlt.solve(-jtr);
    if (!delta.allFinite()) break;
    c += delta;
    if (delta.norm() < 1e-13) break;
  }
  if (!c.allFinite()) return std::nullopt;
  return c;
}

struct SphereFit {
  Point3 center = Point3::Zero();
  double inlier_ratio = 0.0;
  double fit_error = 0.0;
  std::size_t inliers = 0;
};

struct SphereRansacParams {
  int iterations = 1000;
  int sample_size = 4;
  double inlier_eps = 0.003;
  double min_inlier_ratio = 0.3;
  double t_inl = 0.05;
  int refit_rounds = 10;
};

namespace detail {

// Inliers |‖c−s‖−r| < eps; error = weighted mean of (‖c−s‖²−r²)² over inliers.
inline SampleScore score_sphere(const SphereCloud& cloud, const Point3& c, double r, double eps,
                                std::vector<std::size_t>* inliers = nullptr) {
  std::size_t count = 0;
  double err = 0.0, wsum = 0.0;
  if (inliers) inliers->clear();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double d2 = (c - cloud.points[i]).squaredNorm();
    if (std::abs(std::sqrt(d2) - r) < eps) {
      ++count;
      const double a = d2 - r * r;
      err += cloud.weights[i] * a * a;
      wsum += cloud.weights[i];
      if (inliers) inliers->push_back(i);
    }
  }
  SampleScore s;
  s.inlier_ratio = static_cast<double>(count) / static_cast<double>(cloud.size());
  s.error = wsum > 0.0 ? err / wsum : std::numeric_limits<double>::infinity();
  return s;
}

}  // namespace detail

/// RANSAC over minimal weighted samples; the best sample (by the inlier-ratio
/// acceptance rule) is refit on all of its inliers.
inline SphereFit fit_sphere_ransac(const SphereCloud& cloud, double r, const SphereRansacParams& params, Rng& rng) {
  if (!(r > 0.0)) throw ValidationError("sphere radius must be positive");
  if (cloud.size() < 10) throw InsufficientData("sphere cloud needs at least 10 points");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.weights[i] > 0.0) usable.push_back(i);
  }
  if (usable.size() < static_cast<std::size_t>(params.sample_size)) {
    throw InsufficientData("too few points with positive weight");
  }

  SampleScore best;
  Point3 best_center = Point3::Zero();
  std::vector<std::size_t> pick;
  PointList sp(params.sample_size);
  std::vector<double> sw(params.sample_size);
  for (int it = 0; it < params.iterations; ++it) {
    sample_distinct(rng, usable.size(), static_cast<std::size_t>(params.sample_size), pick);
    for (int k = 0; k < params.sample_size; ++k) {
      sp[k] = cloud.points[usable[pick[k]]];
      sw[k] = cloud.weights[usable[pick[k]]];
    }
    const auto c = fit_sphere_center(sp, sw, r);
    if (!c) continue;
    const auto score = detail::score_sphere(cloud, *c, r, params.inlier_eps);
    if (accept_candidate(score, best, params.t_inl)) {
      best = score;
      best_center = *c;
    }
  }
  if (best.empty() || best.inlier_ratio < params.min_inlier_ratio) {
    throw FitFailed("no sphere hypothesis reached the minimum inlier ratio");
  }

  std::vector<std::size_t> inl;
  detail::score_sphere(cloud, best_center, r, params.inlier_eps, &inl);
  Point3 center = best_center;
  for (int round = 0; round < std::max(1, params.refit_rounds); ++round) {
    PointList ip;
    std::vector<double> iw;
    for (auto i : inl) {
      ip.push_back(cloud.points[i]);
      iw.push_back(cloud.weights[i]);
    }
    const auto c = fit_sphere_center(ip, iw, r, 10);
    if (!c) break;
    center = *c;
    detail::score_sphere(cloud, center, r, params.inlier_eps, &inl);
    if (inl.size() < 4) break;
  }
  const auto final_score = detail::score_sphere(cloud, center, r, params.inlier_eps, &inl);
  return {center, final_score.inlier_ratio, final_score.error, inl.size()};
}

// ---------------------------------------------------------------------------
// Ordering
// ---------------------------------------------------------------------------

struct OrderedCorners {
  std::array<Point3, 4> centers;
  std::array<int, 4> source_index;  // input index of each ordered corner
};

/// Orders four centers as (top-left, top-right, bottom-left, bottom-right):
/// the two with the largest projection on `up` form the top row, each row is
/// split by the projection on `right`.
inline OrderedCorners order_centers(const std::array<Point3, 4>& centers, const Vec3& up, const Vec3& right,
                                    double ambiguity = 1e-3) {
  std::array<int, 4> idx{0, 1, 2, 3};
  std::array<double, 4> pu{};
  for (int i = 0; i < 4; ++i) pu[i] = centers[i].dot(up);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return pu[a] > pu[b] || (pu[a] == pu[b] && a < b); });
  if (pu[idx[1]] - pu[idx[2]] < ambiguity) throw AmbiguousOrdering("top/bottom split is ambiguous");
  auto split = [&](int a, int b) {
    const double ra = centers[a].dot(right), rb = centers[b].dot(right);
    if (std::abs(ra - rb) < ambiguity) throw AmbiguousOrdering("left/right split is ambiguous");
    return ra < rb ? std::pair{a, b} : std::pair{b, a};
  };
  const auto [tl, tr] = split(idx[0], idx[1]);
  const auto [bl, br] = split(idx[2], idx[3]);
  OrderedCorners out;
  out.source_index = {tl, tr, bl, br};
  for (int i = 0; i < 4; ++i) out.centers[i] = centers[out.source_index[i]];
  return out;
}

// ---------------------------------------------------------------------------
// Optical target localization
// ---------------------------------------------------------------------------

struct OpticalTarget {
  std::array<Point3, 4> centers;
  std::array<double, 4> per_sphere_inlier_ratio{};
  std::array<double, 4> per_sphere_fit_error{};
};

// Checks pairwise center distances against the target layout (relative tolerance).
inline bool consistent_with_geometry(const std::array<Point3, 4>& c, const TargetGeometry& geom, double rel_tol = 0.2) {
  const auto d = geom.pairwise_distances();
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      if (std::abs((c[i] - c[j]).norm() - d(i, j)) > rel_tol * d(i, j)) return false;
    }
  }
  return true;
}

/// Fits each of the four sphere clouds independently (one RNG stream per
/// sphere derived from `seed`), then orders the centers.
inline OpticalTarget fit_spheres_ransac(const std::array<SphereCloud, 4>& clouds, double r,
                                        const SphereRansacParams& params, std::uint64_t seed, const Vec3& up,
                                        const Vec3& right) {
  std::array<SphereFit, 4> fits;
  for (int i = 0; i < 4; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    fits[i] = fit_sphere_ransac(clouds[i], r, params, rng);
  }
  std::array<Point3, 4> raw;
  for (int i = 0; i < 4; ++i) raw[i] = fits[i].center;
  const auto ordered = order_centers(raw, up, right);
  OpticalTarget t;
  for (int i = 0; i < 4; ++i) {
    const auto& f = fits[ordered.source_index[i]];
    t.centers[i] = f.center;
    t.per_sphere_inlier_ratio[i] = f.inlier_ratio;
    t.per_sphere_fit_error[i] = f.fit_error;
  }
  return t;
}

}  // namespace nfcalib
