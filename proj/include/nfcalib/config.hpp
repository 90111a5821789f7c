#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nfcalib/errors.hpp"
#include "nfcalib/io.hpp"
#include "nfcalib/optical.hpp"
#include "nfcalib/radar.hpp"
#include "nfcalib/registration.hpp"
#include "nfcalib/target.hpp"

namespace nfcalib {

/// Every tunable of the calibration pipeline. Defaults follow the published
/// parameter set where one exists.
struct PipelineConfig {
  TargetGeometry geometry;
  double scale = 1.0;  // optical units to radar meters, fixed a priori
  double t_inl = 0.05;
  std::uint64_t seed = 1;

  // optical
  double max_range = 1.0;
  HoughParams hough;
  BackprojectParams backproject;
  double size_tol = 0.25;
  double color_tol = 40.0;
  std::vector<Rgb> palette;  // empty: no color filtering
  SphereRansacParams sphere;
  Vec3 optical_up = Vec3(0, -1, 0);
  Vec3 optical_right = Vec3(1, 0, 0);

  // radar
  ClusterParams clusters;
  LocalizeParams localize;

  // refinement
  RefineParams refine;

  // t_inl is shared by every RANSAC-style comparison.
  SphereRansacParams sphere_params() const {
    auto p = sphere;
    p.t_inl = t_inl;
    return p;
  }
  LocalizeParams localize_params() const {
    auto p = localize;
    p.t_inl = t_inl;
    return p;
  }
  RefineParams refine_params() const {
    auto p = refine;
    p.t_inl = t_inl;
    return p;
  }

  void validate() const;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

// Drops a '#' comment that is not inside double quotes.
inline std::string strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return std::string(line.substr(0, i));
  }
  return std::string(line);
}

inline std::string unquote(std::string v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

// Splits list values such as `[1, 2, 3]`, `1 2 3` or `"a, b"`.
inline std::vector<std::string> list_items(std::string v) {
  for (char& c : v) {
    if (c == '[' || c == ']' || c == '"' || c == ',') c = ' ';
  }
  std::vector<std::string> out;
  std::istringstream is(v);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace detail

// Parsed `key = value` pairs, in file order. `[section]` headers are allowed
// for readability but do not namespace keys.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::map<std::string, int> seen;
  std::size_t pos = 0;
  std::string_view raw;
  int lineno = 0;
  while (detail::next_line(text, pos, raw)) {
    ++lineno;
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(std::string_view(line).substr(0, eq));
    std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (seen[key]++) throw ConfigError("duplicate config key '" + key + "'");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

namespace detail {

struct ConfigField {
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

inline double to_number(const std::string& v) {
  double d = 0.0;
  if (!parse_double(unquote(v), d) || !std::isfinite(d)) throw ConfigError("expects a number");
  return d;
}

inline long long to_integer(const std::string& v) {
  long long n = 0;
  if (!parse_long(unquote(v), n)) throw ConfigError("expects an integer");
  return n;
}

inline Vec3 to_vec3(const std::string& v) {
  const auto items = list_items(v);
  if (items.size() != 3) throw ConfigError("expects three numbers");
  Vec3 out;
  for (int i = 0; i < 3; ++i) out(i) = to_number(items[i]);
  if (!(out.norm() > 0.0)) throw ConfigError("must be a non-zero vector");
  return out.normalized();
}

inline std::vector<Rgb> to_palette(const std::string& v) {
  std::vector<Rgb> out;
  for (auto tok : list_items(v)) {
    if (!tok.empty() && tok.front() == '#') tok.erase(0, 1);
    if (tok.size() != 6) throw ConfigError("expects 6-digit hex colors");
    Rgb c{};
    for (int k = 0; k < 3; ++k) {
      unsigned value = 0;
      const auto* first = tok.data() + 2 * k;
      const auto [p, ec] = std::from_chars(first, first + 2, value, 16);
      if (ec != std::errc() || p != first + 2) throw ConfigError("has a bad hex color");
      c[k] = static_cast<std::uint8_t>(value);
    }
    out.push_back(c);
  }
  return out;
}

inline std::string hex(const Rgb& c) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s = "#";
  for (auto v : c) {
    s += digits[v >> 4];
    s += digits[v & 15];
  }
  return s;
}

inline std::string vec_text(const Vec3& v) {
  return "[" + format_double(v.x()) + ", " + format_double(v.y()) + ", " + format_double(v.z()) + "]";
}

template <typename T>
ConfigField number(T PipelineConfig::*outer, double T::*field) {
  return {[=](PipelineConfig& c, const std::string& v) { c.*outer.*field = to_number(v); },
          [=](const PipelineConfig& c) { return format_double(c.*outer.*field); }};
}

inline ConfigField number(double PipelineConfig::*field) {
  return {[=](PipelineConfig& c, const std::string& v) { c.*field = to_number(v); },
          [=](const PipelineConfig& c) { return format_double(c.*field); }};
}

template <typename T>
ConfigField integer(T PipelineConfig::*outer, int T::*field) {
  return {[=](PipelineConfig& c, const std::string& v) {
            const auto n = to_integer(v);
            if (n < -(1ll << 31) || n >= (1ll << 31)) throw ConfigError("integer out of range");
            c.*outer.*field = static_cast<int>(n);
          },
          [=](const PipelineConfig& c) { return std::to_string(c.*outer.*field); }};
}

inline ConfigField vector3(Vec3 PipelineConfig::*field) {
  return {[=](PipelineConfig& c, const std::string& v) { c.*field = to_vec3(v); },
          [=](const PipelineConfig& c) { return vec_text(c.*field); }};
}

// Name -> accessor for every config key, in documentation order.
inline const std::vector<std::pair<std::string, ConfigField>>& config_fields() {
  using C = PipelineConfig;
  static const std::vector<std::pair<std::string, ConfigField>> fields = {
      // target
      {"edge_length", number(&C::geometry, &TargetGeometry::edge_length)},
      {"styrofoam_radius", number(&C::geometry, &TargetGeometry::styrofoam_radius)},
      {"board_offset", number(&C::geometry, &TargetGeometry::board_offset)},
      {"metal_ball_diameter", number(&C::geometry, &TargetGeometry::metal_ball_diameter)},
      {"scale", number(&C::scale)},
      {"seed",
       {[](C& c, const std::string& v) {
          const auto s = unquote(v);
          std::uint64_t n = 0;
          const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
          if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("expects an unsigned integer");
          c.seed = n;
        },
        [](const C& c) { return std::to_string(c.seed); }}},
      {"t_inl", number(&C::t_inl)},
      // radar detection and localization
      {"t_db", number(&C::clusters, &ClusterParams::t_db)},
      {"t_min", number(&C::clusters, &ClusterParams::t_min)},
      {"t_max", number(&C::clusters, &ClusterParams::t_max)},
      {"n_clusters", integer(&C::clusters, &ClusterParams::n_clusters)},
      {"m_samples", integer(&C::clusters, &ClusterParams::m_samples)},
      {"alpha", {[](C& c, const std::string& v) { c.localize.weights.alpha = to_number(v); },
                 [](const C& c) { return format_double(c.localize.weights.alpha); }}},
      {"beta", {[](C& c, const std::string& v) { c.localize.weights.beta = to_number(v); },
                [](const C& c) { return format_double(c.localize.weights.beta); }}},
      {"gamma", {[](C& c, const std::string& v) { c.localize.weights.gamma = to_number(v); },
                 [](const C& c) { return format_double(c.localize.weights.gamma); }}},
      {"plane_eps", number(&C::localize, &LocalizeParams::plane_eps)},
      {"energy_reject", number(&C::localize, &LocalizeParams::energy_reject)},
      {"anchor_in_inliers",
       {[](C& c, const std::string& v) {
          const auto s = unquote(v);
          if (s != "true" && s != "false") throw ConfigError("expects true or false");
          c.localize.anchor_in_inliers = s == "true";
        },
        [](const C& c) { return std::string(c.localize.anchor_in_inliers ? "true" : "false"); }}},
      {"radar_up", {[](C& c, const std::string& v) { c.localize.up = to_vec3(v); },
                    [](const C& c) { return vec_text(c.localize.up); }}},
      {"radar_right", {[](C& c, const std::string& v) { c.localize.right = to_vec3(v); },
                       [](const C& c) { return vec_text(c.localize.right); }}},
      // optical detection and localization
      {"max_range", number(&C::max_range)},
      {"ransac_iters_optical", integer(&C::sphere, &SphereRansacParams::iterations)},
      {"ransac_sample_size", integer(&C::sphere, &SphereRansacParams::sample_size)},
      {"sphere_inlier_eps", number(&C::sphere, &SphereRansacParams::inlier_eps)},
      {"min_inlier_ratio", number(&C::sphere, &SphereRansacParams::min_inlier_ratio)},
      {"sphere_refit_rounds", integer(&C::sphere, &SphereRansacParams::refit_rounds)},
      {"hough_min_radius_px", number(&C::hough, &HoughParams::min_radius_px)},
      {"hough_max_radius_px", number(&C::hough, &HoughParams::max_radius_px)},
      {"hough_edge_percentile", number(&C::hough, &HoughParams::edge_percentile)},
      {"hough_min_edge_gradient", number(&C::hough, &HoughParams::min_edge_gradient)},
      {"hough_min_center_distance_px", number(&C::hough, &HoughParams::min_center_distance_px)},
      {"hough_min_votes", number(&C::hough, &HoughParams::min_votes)},
      {"hough_max_candidates", integer(&C::hough, &HoughParams::max_candidates)},
      {"hough_median_half_width", integer(&C::hough, &HoughParams::median_half_width)},
      {"size_tol", number(&C::size_tol)},
      {"color_tol", number(&C::color_tol)},
      {"palette",
       {[](C& c, const std::string& v) { c.palette = to_palette(v); },
        [](const C& c) {
          std::string s = "\"";
          for (std::size_t i = 0; i < c.palette.size(); ++i) s += (i ? " " : "") + hex(c.palette[i]);
          return s + "\"";
        }}},
      {"min_valid_pixels", integer(&C::backproject, &BackprojectParams::min_valid_pixels)},
      {"depth_jump", number(&C::backproject, &BackprojectParams::depth_jump)},
      {"normal_step_px", integer(&C::backproject, &BackprojectParams::normal_step_px)},
      {"optical_up", vector3(&C::optical_up)},
      {"optical_right", vector3(&C::optical_right)},
      // refinement
      {"ransac_iters_refine", integer(&C::refine, &RefineParams::iterations)},
      {"corr_gate", number(&C::refine, &RefineParams::corr_gate)},
      {"refine_rounds", integer(&C::refine, &RefineParams::rounds)},
      {"min_correspondences", integer(&C::refine, &RefineParams::min_correspondences)},
  };
  return fields;
}

}  // namespace detail

inline void PipelineConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(std::isfinite(v) && v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
  };
  try {
    geometry.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  positive(scale, "scale");
  positive(max_range, "max_range");
  positive(clusters.t_db, "t_db");
  positive(clusters.t_min, "t_min");
  positive(clusters.t_max, "t_max");
  positive(localize.plane_eps, "plane_eps");
  positive(localize.energy_reject, "energy_reject");
  positive(sphere.inlier_eps, "sphere_inlier_eps");
  positive(refine.corr_gate, "corr_gate");
  positive(hough.min_radius_px, "hough_min_radius_px");
  if (!(t_inl >= 0.0 && t_inl <= 1.0)) throw ConfigError("t_inl must lie in [0, 1]");
  if (clusters.t_max <= clusters.t_min) throw ConfigError("t_max must exceed t_min");
  if (clusters.n_clusters < 5) throw ConfigError("n_clusters must be at least 5");
  if (clusters.m_samples < 1) throw ConfigError("m_samples must be at least 1");
  if (localize.weights.alpha < 0 || localize.weights.beta < 0 || localize.weights.gamma < 0) {
    throw ConfigError("energy weights must be non-negative");
  }
  if (hough.max_radius_px < hough.min_radius_px) throw ConfigError("hough radius range is empty");
  if (!(hough.edge_percentile >= 0.0 && hough.edge_percentile <= 1.0)) throw ConfigError("hough_edge_percentile must lie in [0, 1]");
  if (hough.max_candidates < 4) throw ConfigError("hough_max_candidates must be at least 4");
  if (hough.median_half_width < 0 || hough.median_half_width > 10) throw ConfigError("hough_median_half_width must lie in [0, 10]");
  if (sphere.iterations < 1 || refine.iterations < 1) throw ConfigError("RANSAC iterations must be positive");
  if (sphere.sample_size < 3 || sphere.sample_size > 64) throw ConfigError("ransac_sample_size must lie in [3, 64]");
  if (!(sphere.min_inlier_ratio >= 0.0 && sphere.min_inlier_ratio <= 1.0)) throw ConfigError("min_inlier_ratio must lie in [0, 1]");
  if (refine.rounds < 1) throw ConfigError("refine_rounds must be at least 1");
  if (refine.min_correspondences < 4) throw ConfigError("min_correspondences must be at least 4");
  if (backproject.min_valid_pixels < 10) throw ConfigError("min_valid_pixels must be at least 10");
  if (std::abs(optical_up.dot(optical_right)) > 0.5 || std::abs(localize.up.dot(localize.right)) > 0.5) {
    throw ConfigError("up and right vectors must be roughly orthogonal");
  }
}

/// Applies key/value pairs on top of `base`. Unknown keys and malformed
/// values raise ConfigError.
inline PipelineConfig apply_config(const KeyValues& kv, PipelineConfig base = {}) {
  const auto& fields = detail::config_fields();
  for (const auto& [key, value] : kv) {
    const auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.first == key; });
    if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      it->second.set(base, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  base.validate();
  return base;
}

inline PipelineConfig parse_config(std::string_view text, PipelineConfig base = {}) {
  return apply_config(parse_key_values(text), std::move(base));
}

inline PipelineConfig load_config(const std::filesystem::path& path) { return parse_config(detail::read_file(path)); }

// Canonical text form; parse_config(config_to_text(c)) reproduces c.
inline std::string config_to_text(const PipelineConfig& c) {
  std::string out;
  for (const auto& [key, field] : detail::config_fields()) out += key + " = " + field.get(c) + "\n";
  return out;
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : detail::config_fields()) keys.push_back(f.first);
  return keys;
}

}  // namespace nfcalib
