#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "nfcalib/config.hpp"
#include "nfcalib/errors.hpp"
#include "nfcalib/evaluation.hpp"
#include "nfcalib/io.hpp"
#include "nfcalib/optical.hpp"
#include "nfcalib/radar.hpp"
#include "nfcalib/registration.hpp"

namespace nfcalib {

// Stage a pipeline failure is attributed to; values double as CLI exit codes.
enum class Stage : int {
  kUsage = 2,
  kOpticalDetection = 3,
  kRadarDetection = 4,
  kLocalization = 5,
  kRegistration = 6,
  kIo = 7,
};

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kUsage: return "usage";
    case Stage::kOpticalDetection: return "optical_detection";
    case Stage::kRadarDetection: return "radar_detection";
    case Stage::kLocalization: return "localization";
    case Stage::kRegistration: return "registration";
    case Stage::kIo: return "io";
  }
  return "unknown";
}

// Wraps a library error with the stage it came from.
class StageError : public Error {
 public:
  StageError(Stage stage, std::string cause, const std::string& what)
      : Error(what), stage_(stage), cause_(std::move(cause)) {}
  const char* kind() const noexcept override { return "StageError"; }
  Stage stage() const { return stage_; }
  const std::string& cause() const { return cause_; }

 private:
  Stage stage_;
  std::string cause_;
};

template <typename F>
auto run_stage(Stage stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const IoError& e) {
    throw StageError(Stage::kIo, e.kind(), e.what());
  } catch (const Error& e) {
    throw StageError(stage, e.kind(), e.what());
  }
}

struct OpticalStage {
  std::vector<CircleCandidate> candidates;
  std::vector<CircleCandidate> circles;  // the four accepted circles
  std::array<std::size_t, 4> cloud_sizes{};
  OpticalTarget target;
};

inline OpticalStage run_optical(const DepthCapture& capture, const PipelineConfig& cfg) {
  OpticalStage out;
  std::array<SphereCloud, 4> clouds;
  run_stage(Stage::kOpticalDetection, [&] {
    capture.validate();
    out.candidates = detect_circles(capture, cfg.max_range, cfg.hough);
    out.circles = filter_circles(out.candidates, capture, cfg.palette, cfg.size_tol, cfg.color_tol);
    for (int i = 0; i < 4; ++i) {
      clouds[i] = backproject_circle(capture, out.circles[i], cfg.backproject);
      out.cloud_sizes[i] = clouds[i].size();
    }
    return 0;
  });
  run_stage(Stage::kLocalization, [&] {
    out.target = fit_spheres_ransac(clouds, cfg.geometry.styrofoam_radius, cfg.sphere_params(), cfg.seed,
                                    cfg.optical_up, cfg.optical_right);
    if (!consistent_with_geometry(out.target.centers, cfg.geometry)) {
      throw FitFailed("optical sphere centers do not match the target layout");
    }
    return 0;
  });
  return out;
}

struct RadarStage {
  ClusterSet clusters;
  RadarTarget target;
};

inline RadarStage run_radar(const RadarCloud& cloud, const PipelineConfig& cfg) {
  RadarStage out;
  out.clusters = run_stage(Stage::kRadarDetection, [&] {
    cloud.validate();
    return detect_clusters(cloud, cfg.clusters);
  });
  out.target = run_stage(Stage::kLocalization,
                         [&] { return localize_radar_target(out.clusters, cfg.geometry, cfg.localize_params()); });
  return out;
}

struct CalibrationRun {
  OpticalStage optical;
  RadarStage radar;
  RigidCalibration calibration;
  KabschDiagnostics kabsch;
};

/// Full single-shot calibration: both sensor-specific detection and
/// localization stages, then Kabsch on the four ordered center pairs.
inline CalibrationRun calibrate(const DepthCapture& capture, const RadarCloud& cloud, const PipelineConfig& cfg) {
  CalibrationRun run;
  run.optical = run_optical(capture, cfg);
  run.radar = run_radar(cloud, cfg);
  run.calibration = run_stage(Stage::kRegistration, [&] {
    const auto& o = run.optical.target.centers;
    const auto& r = run.radar.target.corners;
    return kabsch_register(std::span<const Point3>(o.data(), 4), std::span<const Point3>(r.data(), 4), cfg.scale,
                           &run.kabsch);
  });
  return run;
}

// Energy configurations compared by the ablation. Without the anchor ball
// there is nothing to test the board offset against, so the two reduced
// variants also drop the anchor from the inlier count.
enum class EnergyVariant { kDataOnly, kWithSphere, kFull };

inline const char* variant_name(EnergyVariant v) {
  switch (v) {
    case EnergyVariant::kDataOnly: return "data";
    case EnergyVariant::kWithSphere: return "data+sphere";
    case EnergyVariant::kFull: return "full";
  }
  return "unknown";
}

inline PipelineConfig with_variant(PipelineConfig cfg, EnergyVariant v) {
  if (v == EnergyVariant::kFull) return cfg;
  if (v == EnergyVariant::kDataOnly) cfg.localize.weights.alpha = 0.0;
  cfg.localize.weights.beta = 0.0;
  cfg.localize.weights.gamma = 0.0;
  cfg.localize.anchor_in_inliers = false;
  return cfg;
}

struct VariantOutcome {
  bool ok = false;
  std::string failure;  // error kind when !ok
  ExtrinsicError error;
};

/// Calibrates one scene under all three energy variants against a known
/// extrinsic. The optical side does not depend on the variant and runs once.
inline std::array<VariantOutcome, 3> ablate_scene(const DepthCapture& capture, const RadarCloud& cloud,
                                                  const PipelineConfig& cfg, const RigidTransform& truth) {
  std::array<VariantOutcome, 3> out;
  OpticalStage optical;
  try {
    optical = run_optical(capture, cfg);
  } catch (const StageError& e) {
    for (auto& o : out) o.failure = e.cause();
    return out;
  }
  for (int v = 0; v < 3; ++v) {
    try {
      const auto radar = run_radar(cloud, with_variant(cfg, static_cast<EnergyVariant>(v)));
      const auto calib = run_stage(Stage::kRegistration, [&] {
        const auto& o = optical.target.centers;
        const auto& r = radar.target.corners;
        return kabsch_register(std::span<const Point3>(o.data(), 4), std::span<const Point3>(r.data(), 4), cfg.scale);
      });
      out[v].ok = true;
      out[v].error = extrinsic_error(calib.transform, truth);
    } catch (const StageError& e) {
      out[v].failure = e.cause();
    }
  }
  return out;
}

struct AblationSummary {
  std::size_t scenes = 0, failures = 0;
  double median_translation = 0.0, mean_translation = 0.0;
  double median_rotation_deg = 0.0, mean_rotation_deg = 0.0;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Failed scenes are counted but left out of the statistics.
inline AblationSummary summarize_variant(const std::vector<VariantOutcome>& rows) {
  AblationSummary s;
  s.scenes = rows.size();
  std::vector<double> t, r;
  for (const auto& o : rows) {
    if (!o.ok) {
      ++s.failures;
      continue;
    }
    t.push_back(o.error.translation);
    r.push_back(o.error.rotation_deg);
  }
  s.median_translation = median_of(t);
  s.median_rotation_deg = median_of(r);
  auto mean = [](const std::vector<double>& v) {
    double a = 0.0;
    for (double x : v) a += x;
    return v.empty() ? std::numeric_limits<double>::quiet_NaN() : a / static_cast<double>(v.size());
  };
  s.mean_translation = mean(t);
  s.mean_rotation_deg = mean(r);
  return s;
}

/// One row per variant: summary columns, then a translation/rotation column
/// pair per scene ("fail:<kind>" for failed runs). Lengths in millimeters.
inline std::string ablation_csv(const std::vector<std::string>& scene_names,
                                const std::vector<std::array<VariantOutcome, 3>>& results) {
  std::ostringstream os;
  os.precision(10);
  os << "variant,scenes,failures,median_translation_mm,mean_translation_mm,median_rotation_deg,mean_rotation_deg";
  for (const auto& n : scene_names) os << ',' << n << "_translation_mm," << n << "_rotation_deg";
  os << '\n';
  for (int v = 0; v < 3; ++v) {
    std::vector<VariantOutcome> rows;
    for (const auto& r : results) rows.push_back(r[v]);
    const auto s = summarize_variant(rows);
    os << variant_name(static_cast<EnergyVariant>(v)) << ',' << s.scenes << ',' << s.failures << ','
       << 1e3 * s.median_translation << ',' << 1e3 * s.mean_translation << ',' << s.median_rotation_deg << ','
       << s.mean_rotation_deg;
    for (const auto& o : rows) {
      if (o.ok) {
        os << ',' << 1e3 * o.error.translation << ',' << o.error.rotation_deg;
      } else {
        os << ",fail:" << o.failure << ",fail:" << o.failure;
      }
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// JSON reports
// ---------------------------------------------------------------------------

inline nlohmann::json point_json(const Point3& p) { return nlohmann::json::array({p.x(), p.y(), p.z()}); }

inline nlohmann::json energy_json(const EnergyTerms& e) {
  return {{"total", e.total}, {"data", e.data}, {"sphere", e.sphere}, {"plane", e.plane}, {"anchor", e.anchor}};
}

inline nlohmann::json optical_json(const OpticalStage& s) {
  nlohmann::json circles = nlohmann::json::array();
  for (const auto& c : s.circles) {
    circles.push_back({{"center_px", {c.center_px.x(), c.center_px.y()}}, {"radius_px", c.radius_px}, {"score", c.score}});
  }
  nlohmann::json centers = nlohmann::json::array();
  for (const auto& c : s.target.centers) centers.push_back(point_json(c));
  return {{"candidates", s.candidates.size()},
          {"circles", circles},
          {"cloud_sizes", s.cloud_sizes},
          {"centers", centers},
          {"inlier_ratio", s.target.per_sphere_inlier_ratio},
          {"fit_error", s.target.per_sphere_fit_error}};
}

inline nlohmann::json radar_json(const RadarStage& s) {
  nlohmann::json corners = nlohmann::json::array();
  for (const auto& c : s.target.corners) corners.push_back(point_json(c));
  return {{"clusters", s.clusters.size()},
          {"corners", corners},
          {"anchor", point_json(s.target.anchor)},
          {"corner_clusters", s.target.corner_cluster},
          {"anchor_cluster", s.target.anchor_cluster},
          {"board_normal", point_json(s.target.board_plane.normal)},
          {"plane_residual", s.target.plane_residual},
          {"energy", energy_json(s.target.energy)},
          {"inlier_ratio", s.target.inlier_ratio},
          {"candidates_evaluated", s.target.candidates_evaluated}};
}

inline nlohmann::json run_json(const CalibrationRun& run) {
  return {{"optical", optical_json(run.optical)},
          {"radar", radar_json(run.radar)},
          {"calibration", calibration_to_json(run.calibration)},
          {"kabsch",
           {{"singular_values", point_json(run.kabsch.singular_values)},
            {"expected_singular_values", point_json(run.kabsch.expected_singular_values)},
            {"singular_value_warning", run.kabsch.singular_value_warning}}}};
}

}  // namespace nfcalib
