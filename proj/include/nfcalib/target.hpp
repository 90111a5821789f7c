#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>

#include "nfcalib/errors.hpp"
#include "nfcalib/geometry.hpp"

namespace nfcalib {

// Corner order used throughout: top-left, top-right, bottom-left, bottom-right.
enum Corner : int { kTopLeft = 0, kTopRight = 1, kBottomLeft = 2, kBottomRight = 3 };

/// Physical layout of the calibration target: four styrofoam spheres whose
/// centers (each holding a steel ball) form a square, and a fifth steel ball
/// (the anchor) on the board behind the square's center.
///
/// Target frame: x to the right, y downward, z pointing from the sphere
/// centers into the board. Corner balls lie in z = 0, the anchor at
/// (0, 0, board_offset).
struct TargetGeometry {
  double edge_length = 0.06;
  double styrofoam_radius = 0.025;
  double board_offset = 0.025;
  double metal_ball_diameter = 0.0025;

  // Expected center distances d^{i,j} in corner order.
  Eigen::Matrix4d pairwise_distances() const {
    const double e = edge_length;
    const double g = edge_length * std::sqrt(2.0);
    Eigen::Matrix4d d;
    d << 0, e, e, g,
         e, 0, g, e,
         e, g, 0, e,
         g, e, e, 0;
    return d;
  }

  std::array<Point3, 4> corner_positions() const {
    const double h = 0.5 * edge_length;
    return {Point3(-h, -h, 0), Point3(h, -h, 0), Point3(-h, h, 0), Point3(h, h, 0)};
  }

  Point3 anchor_position() const { return {0.0, 0.0, board_offset}; }

  void validate() const {
    for (double v : {edge_length, styrofoam_radius, board_offset, metal_ball_diameter}) {
      if (!(std::isfinite(v) && v > 0.0)) throw ValidationError("target geometry lengths must be positive");
    }
    if (2.0 * styrofoam_radius >= edge_length) {
      throw ValidationError("styrofoam spheres of the target must not overlap");
    }
  }
};

}  // namespace nfcalib
