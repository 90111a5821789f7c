#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nfcalib/errors.hpp"
#include "nfcalib/geometry.hpp"

namespace nfcalib {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct CameraIntrinsics {
  double fx = 504.0;
  double fy = 504.0;
  double cx = 320.0;
  double cy = 288.0;

  void validate() const {
    if (!(std::isfinite(fx) && fx > 0 && std::isfinite(fy) && fy > 0)) {
      throw ValidationError("focal lengths must be positive and finite");
    }
    if (!(std::isfinite(cx) && std::isfinite(cy))) throw ValidationError("principal point must be finite");
  }

  Point3 backproject(double u, double v, double z) const {
    return {(u - cx) * z / fx, (v - cy) * z / fy, z};
  }

  Eigen::Vector2d project(const Point3& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }
};

using Rgb = std::array<std::uint8_t, 3>;

/// Depth map in meters (0 = invalid) with an aligned RGB image, row-major.
struct DepthCapture {
  int width = 0;
  int height = 0;
  std::vector<float> depth;
  std::vector<Rgb> rgb;
  CameraIntrinsics intrinsics;

  DepthCapture() = default;
  DepthCapture(int w, int h, const CameraIntrinsics& k)
      : width(w), height(h), depth(static_cast<std::size_t>(w) * h, 0.0f),
        rgb(static_cast<std::size_t>(w) * h, Rgb{0, 0, 0}), intrinsics(k) {}

  std::size_t index(int u, int v) const { return static_cast<std::size_t>(v) * width + u; }
  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }
  float depth_at(int u, int v) const { return depth[index(u, v)]; }
  const Rgb& rgb_at(int u, int v) const { return rgb[index(u, v)]; }

  void validate() const {
    if (width <= 0 || height <= 0) throw ValidationError("capture dimensions must be positive");
    const auto n = static_cast<std::size_t>(width) * height;
    if (depth.size() != n || rgb.size() != n) throw DimensionMismatch("depth/rgb size does not match width x height");
    for (float z : depth) {
      if (!std::isfinite(z) || z < 0.0f) throw ValidationError("depth values must be finite and non-negative");
    }
    intrinsics.validate();
  }
};

/// Radar point cloud with peak-normalized confidence and amplitude in dB (max 0 dB).
struct RadarCloud {
  PointList points;
  std::vector<double> confidence;
  std::vector<double> amplitude_db;

  std::size_t size() const { return points.size(); }

  // Builds a cloud from raw linear amplitudes; normalizes by the peak.
  static RadarCloud from_amplitudes(PointList pts, const std::vector<double>& amplitude) {
    if (pts.size() != amplitude.size()) throw DimensionMismatch("point and amplitude counts differ");
    if (pts.empty()) throw EmptyInput("radar cloud is empty");
    double peak = 0.0;
    for (double a : amplitude) {
      if (!std::isfinite(a) || a < 0.0) throw ValidationError("radar amplitudes must be finite and non-negative");
      peak = std::max(peak, a);
    }
    if (!(peak > 0.0)) throw ValidationError("radar cloud has no positive amplitude");
    RadarCloud c;
    c.points = std::move(pts);
    c.confidence.reserve(amplitude.size());
    c.amplitude_db.reserve(amplitude.size());
    for (double a : amplitude) {
      const double conf = a / peak;
      c.confidence.push_back(conf);
      c.amplitude_db.push_back(20.0 * std::log10(std::max(conf, 1e-20)));
    }
    c.validate();
    return c;
  }

  void validate() const {
    if (points.size() != confidence.size() || points.size() != amplitude_db.size()) {
      throw DimensionMismatch("radar cloud arrays differ in length");
    }
    if (points.empty()) throw EmptyInput("radar cloud is empty");
    double max_db = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!points[i].allFinite()) throw ValidationError("radar point is not finite");
      if (!(confidence[i] >= 0.0 && confidence[i] <= 1.0)) throw ValidationError("confidence outside [0,1]");
      max_db = std::max(max_db, amplitude_db[i]);
    }
    if (max_db != 0.0) throw ValidationError("radar amplitudes are not peak-normalized");
  }
};

/// Optical-to-radar calibration with its registration residuals.
struct RigidCalibration {
  RigidTransform transform;
  double residual_rmse = 0.0;
  std::vector<double> per_point_residuals;

  static double rms(const std::vector<double>& r) {
    if (r.empty()) return 0.0;
    double s = 0.0;
    for (double v : r) s += v * v;
    return std::sqrt(s / static_cast<double>(r.size()));
  }

  void validate() const {
    transform.validate();
    for (double v : per_point_residuals) {
      if (!std::isfinite(v) || v < 0.0) throw ValidationError("residuals must be finite and non-negative");
    }
    if (!std::isfinite(residual_rmse) || std::abs(residual_rmse - rms(per_point_residuals)) > 1e-12) {
      throw ValidationError("residual_rmse is not the RMS of the per-point residuals");
    }
  }
};

// ---------------------------------------------------------------------------
// Low-level helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline bool parse_long(std::string_view s, long long& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string read_file(const fs::path& path) {
  std::error_code ec;
  if (!fs::exists(path, ec) || fs::is_directory(path, ec)) throw MissingFile("no such file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

template <typename T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

template <typename T>
void append_le(std::string& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) std::reverse(b, b + sizeof(T));
  out.append(b, sizeof(T));
}

// Reads the next line starting at `pos`; returns false at end of data.
inline bool next_line(std::string_view data, std::size_t& pos, std::string_view& line) {
  if (pos >= data.size()) return false;
  const std::size_t nl = data.find('\n', pos);
  const std::size_t end = nl == std::string_view::npos ? data.size() : nl;
  line = data.substr(pos, end - pos);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  pos = nl == std::string_view::npos ? data.size() : nl + 1;
  return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Capture bundle: <dir>/depth.f32, <dir>/rgb.ppm, <dir>/intrinsics.txt
// ---------------------------------------------------------------------------

inline constexpr std::string_view kDepthMagic = "NFDEPTH1";
inline constexpr int kMaxImageSide = 1 << 15;

// depth.f32 layout: "NFDEPTH1\n<width> <height> <scale>\n" followed by
// width*height little-endian float32 values, row-major; meters = value * scale.
inline std::string encode_depth(const DepthCapture& cap) {
  std::string out;
  out += kDepthMagic;
  out += '\n';
  out += std::to_string(cap.width) + ' ' + std::to_string(cap.height) + " 1\n";
  out.reserve(out.size() + cap.depth.size() * 4);
  for (float z : cap.depth) detail::append_le<float>(out, z);
  return out;
}

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> depth;
};

inline DepthImage decode_depth(std::string_view data) {
  std::size_t pos = 0;
  std::string_view line;
  if (!detail::next_line(data, pos, line) || line != kDepthMagic) throw MalformedInput("depth file: bad magic");
  if (!detail::next_line(data, pos, line)) throw MalformedInput("depth file: missing header");
  const auto tok = detail::split_ws(line);
  long long w = 0, h = 0;
  double scale = 0.0;
  if (tok.size() != 3 || !detail::parse_long(tok[0], w) || !detail::parse_long(tok[1], h) ||
      !detail::parse_double(tok[2], scale)) {
    throw MalformedInput("depth file: header must be '<width> <height> <scale>'");
  }
  if (w <= 0 || h <= 0 || w > kMaxImageSide || h > kMaxImageSide) throw MalformedInput("depth file: bad dimensions");
  if (!(std::isfinite(scale) && scale > 0.0)) throw MalformedInput("depth file: scale must be positive");
  const auto n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (data.size() - pos != n * 4) throw MalformedInput("depth file: payload size does not match dimensions");
  DepthImage img{static_cast<int>(w), static_cast<int>(h), std::vector<float>(n)};
  const char* p = data.data() + pos;
  for (std::size_t i = 0; i < n; ++i) {
    float z = detail::load_le<float>(p + 4 * i);
    if (std::isnan(z)) z = 0.0f;  // invalid-depth sentinel
    if (scale != 1.0) z = static_cast<float>(z * scale);
    if (!std::isfinite(z) || z < 0.0f) throw ValidationError("depth file: negative or infinite depth");
    img.depth[i] = z;
  }
  return img;
}

inline std::string encode_ppm(int width, int height, const std::vector<Rgb>& rgb) {
  std::string out = "P6\n" + std::to_string(width) + ' ' + std::to_string(height) + "\n255\n";
  out.reserve(out.size() + rgb.size() * 3);
  for (const auto& c : rgb) out.append(reinterpret_cast<const char*>(c.data()), 3);
  return out;
}

inline void decode_ppm(std::string_view data, int& width, int& height, std::vector<Rgb>& rgb) {
  // Header tokens are whitespace separated; '#' starts a comment up to end of line.
  std::size_t pos = 0;
  auto token = [&]() -> std::string_view {
    for (;;) {
      while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
      if (pos < data.size() && data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
  };
  if (token() != "P6") throw MalformedInput("rgb: only binary PPM (P6) is supported");
  long long w = 0, h = 0, maxval = 0;
  if (!detail::parse_long(token(), w) || !detail::parse_long(token(), h) || !detail::parse_long(token(), maxval)) {
    throw MalformedInput("rgb: malformed PPM header");
  }
  if (maxval != 255) throw MalformedInput("rgb: only 8-bit PPM is supported");
  if (w <= 0 || h <= 0 || w > kMaxImageSide || h > kMaxImageSide) throw MalformedInput("rgb: bad dimensions");
  if (pos >= data.size()) throw MalformedInput("rgb: truncated PPM");
  ++pos;  // single whitespace after maxval
  const auto n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (data.size() - pos != n * 3) throw MalformedInput("rgb: payload size does not match dimensions");
  width = static_cast<int>(w);
  height = static_cast<int>(h);
  rgb.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::memcpy(rgb[i].data(), data.data() + pos + 3 * i, 3);
  }
}

inline std::string encode_intrinsics(const CameraIntrinsics& k) {
  return detail::format_double(k.fx) + '\n' + detail::format_double(k.fy) + '\n' + detail::format_double(k.cx) +
         '\n' + detail::format_double(k.cy) + '\n';
}

inline CameraIntrinsics decode_intrinsics(std::string_view data) {
  const auto tok = detail::split_ws(data);
  if (tok.size() != 4) throw MalformedInput("intrinsics: expected fx fy cx cy");
  CameraIntrinsics k;
  double* dst[4] = {&k.fx, &k.fy, &k.cx, &k.cy};
  for (int i = 0; i < 4; ++i) {
    if (!detail::parse_double(tok[i], *dst[i])) throw MalformedInput("intrinsics: not a number");
  }
  k.validate();
  return k;
}

inline void save_depth_capture(const DepthCapture& cap, const fs::path& dir) {
  cap.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string());
  detail::write_file(dir / "depth.f32", encode_depth(cap));
  detail::write_file(dir / "rgb.ppm", encode_ppm(cap.width, cap.height, cap.rgb));
  detail::write_file(dir / "intrinsics.txt", encode_intrinsics(cap.intrinsics));
}

inline DepthCapture load_depth_capture(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw MissingFile("capture bundle directory not found: " + dir.string());
  DepthImage img = decode_depth(detail::read_file(dir / "depth.f32"));
  DepthCapture cap;
  int w = 0, h = 0;
  decode_ppm(detail::read_file(dir / "rgb.ppm"), w, h, cap.rgb);
  if (w != img.width || h != img.height) throw DimensionMismatch("rgb and depth dimensions differ");
  cap.width = img.width;
  cap.height = img.height;
  cap.depth = std::move(img.depth);
  cap.intrinsics = decode_intrinsics(detail::read_file(dir / "intrinsics.txt"));
  cap.validate();
  return cap;
}

// ---------------------------------------------------------------------------
// PLY (ascii and binary_little_endian), single vertex element of scalar properties
// ---------------------------------------------------------------------------

enum class PlyFormat { kAscii, kBinaryLittleEndian };

struct PlyData {
  std::vector<std::string> comments;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;  // one per property, equal lengths

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

  int find(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
  }

  void add(std::string name, std::vector<double> values) {
    names.push_back(std::move(name));
    columns.push_back(std::move(values));
  }
};

namespace detail {

inline int ply_type_size(std::string_view t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  return 0;
}

inline double ply_load_binary(std::string_view t, const char* p) {
  if (t == "char" || t == "int8") return load_le<std::int8_t>(p);
  if (t == "uchar" || t == "uint8") return load_le<std::uint8_t>(p);
  if (t == "short" || t == "int16") return load_le<std::int16_t>(p);
  if (t == "ushort" || t == "uint16") return load_le<std::uint16_t>(p);
  if (t == "int" || t == "int32") return load_le<std::int32_t>(p);
  if (t == "uint" || t == "uint32") return load_le<std::uint32_t>(p);
  if (t == "float" || t == "float32") return load_le<float>(p);
  return load_le<double>(p);
}

}  // namespace detail

inline constexpr std::size_t kMaxPlyVertices = 50'000'000;

inline PlyData decode_ply(std::string_view data) {
  std::size_t pos = 0;
  std::string_view line;
  if (!detail::next_line(data, pos, line) || line != "ply") throw MalformedInput("ply: bad magic");
  PlyFormat format = PlyFormat::kAscii;
  bool have_format = false, have_vertex = false, header_done = false;
  long long count = 0;
  std::vector<std::string> types;
  PlyData ply;
  while (detail::next_line(data, pos, line)) {
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") {
      header_done = true;
      break;
    }
    if (tok[0] == "comment" || tok[0] == "obj_info") {
      const auto first = line.find(tok[0]) + tok[0].size();
      std::string_view rest = line.substr(first);
      while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.front()))) rest.remove_prefix(1);
      ply.comments.emplace_back(rest);
    } else if (tok[0] == "format") {
      if (tok.size() != 3 || have_format) throw MalformedInput("ply: bad format line");
      if (tok[1] == "ascii") {
        format = PlyFormat::kAscii;
      } else if (tok[1] == "binary_little_endian") {
        format = PlyFormat::kBinaryLittleEndian;
      } else {
        throw MalformedInput("ply: unsupported format " + std::string(tok[1]));
      }
      have_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3 || tok[1] != "vertex" || have_vertex) {
        throw MalformedInput("ply: only a single 'vertex' element is supported");
      }
      if (!detail::parse_long(tok[2], count) || count < 0 || static_cast<std::size_t>(count) > kMaxPlyVertices) {
        throw MalformedInput("ply: bad vertex count");
      }
      have_vertex = true;
    } else if (tok[0] == "property") {
      if (!have_vertex) throw MalformedInput("ply: property before element");
      if (tok.size() != 3 || detail::ply_type_size(tok[1]) == 0) {
        throw MalformedInput("ply: only scalar properties are supported");
      }
      if (ply.find(tok[2]) >= 0) throw MalformedInput("ply: duplicate property " + std::string(tok[2]));
      types.emplace_back(tok[1]);
      ply.names.emplace_back(tok[2]);
    } else {
      throw MalformedInput("ply: unknown header keyword " + std::string(tok[0]));
    }
  }
  if (!header_done || !have_format || !have_vertex) throw MalformedInput("ply: incomplete header");
  if (ply.names.empty()) throw MalformedInput("ply: vertex element has no properties");

  const auto n = static_cast<std::size_t>(count);
  const std::size_t nprop = ply.names.size();
  ply.columns.assign(nprop, {});
  if (format == PlyFormat::kBinaryLittleEndian) {
    std::size_t stride = 0;
    for (const auto& t : types) stride += detail::ply_type_size(t);
    if (data.size() - pos != n * stride) throw MalformedInput("ply: binary payload size mismatch");
    for (auto& c : ply.columns) c.resize(n);
    const char* p = data.data() + pos;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < nprop; ++k) {
        ply.columns[k][i] = detail::ply_load_binary(types[k], p);
        p += detail::ply_type_size(types[k]);
      }
    }
  } else {
    for (auto& c : ply.columns) c.reserve(std::min<std::size_t>(n, 1u << 20));
    std::size_t row = 0;
    while (row < n) {
      if (!detail::next_line(data, pos, line)) throw MalformedInput("ply: truncated ascii body");
      const auto tok = detail::split_ws(line);
      if (tok.empty()) continue;
      if (tok.size() != nprop) throw MalformedInput("ply: wrong number of values in row");
      for (std::size_t k = 0; k < nprop; ++k) {
        double v = 0.0;
        if (!detail::parse_double(tok[k], v)) throw MalformedInput("ply: not a number");
        ply.columns[k].push_back(v);
      }
      ++row;
    }
    while (detail::next_line(data, pos, line)) {
      if (!detail::split_ws(line).empty()) throw MalformedInput("ply: trailing data after vertices");
    }
  }
  return ply;
}

inline std::string encode_ply(const PlyData& ply, PlyFormat format = PlyFormat::kAscii) {
  const std::size_t n = ply.rows();
  for (const auto& c : ply.columns) {
    if (c.size() != n) throw DimensionMismatch("ply: columns differ in length");
  }
  std::string out = "ply\n";
  out += format == PlyFormat::kAscii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n";
  for (const auto& c : ply.comments) out += "comment " + c + '\n';
  out += "element vertex " + std::to_string(n) + '\n';
  for (const auto& name : ply.names) out += "property double " + name + '\n';
  out += "end_header\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < ply.columns.size(); ++k) {
      if (format == PlyFormat::kAscii) {
        if (k) out += ' ';
        out += detail::format_double(ply.columns[k][i]);
      } else {
        detail::append_le<double>(out, ply.columns[k][i]);
      }
    }
    if (format == PlyFormat::kAscii) out += '\n';
  }
  return out;
}

inline PlyData read_ply(const fs::path& path) { return decode_ply(detail::read_file(path)); }

inline void write_ply(const fs::path& path, const PlyData& ply, PlyFormat format = PlyFormat::kAscii) {
  detail::write_file(path, encode_ply(ply, format));
}

// Radar clouds carry a "comment units <m|cm|mm>" header line; coordinates are
// converted to meters on load. The confidence column holds linear amplitudes
// (any positive scale); "amplitude" is accepted as an alias.
inline double ply_units_to_meters(const PlyData& ply) {
  for (const auto& c : ply.comments) {
    const auto tok = detail::split_ws(c);
    if (tok.size() == 2 && tok[0] == "units") {
      if (tok[1] == "m") return 1.0;
      if (tok[1] == "cm") return 0.01;
      if (tok[1] == "mm") return 0.001;
      throw MalformedInput("ply: unknown units " + std::string(tok[1]));
    }
  }
  throw MalformedInput("ply: radar cloud must declare 'comment units <m|cm|mm>'");
}

inline RadarCloud radar_cloud_from_ply(const PlyData& ply) {
  const int ix = ply.find("x"), iy = ply.find("y"), iz = ply.find("z");
  int ic = ply.find("confidence");
  if (ic < 0) ic = ply.find("amplitude");
  if (ix < 0 || iy < 0 || iz < 0 || ic < 0) throw MalformedInput("ply: radar cloud needs x y z confidence");
  const double to_m = ply_units_to_meters(ply);
  const std::size_t n = ply.rows();
  if (n == 0) throw EmptyInput("radar cloud is empty");
  PointList pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Point3 p(ply.columns[ix][i], ply.columns[iy][i], ply.columns[iz][i]);
    if (to_m != 1.0) p *= to_m;
    if (!p.allFinite()) throw ValidationError("radar point is not finite");
    pts.push_back(p);
  }
  return RadarCloud::from_amplitudes(std::move(pts), ply.columns[ic]);
}

inline PlyData radar_cloud_to_ply(const RadarCloud& cloud) {
  PlyData ply;
  ply.comments.push_back("units m");
  std::vector<double> x, y, z;
  for (const auto& p : cloud.points) {
    x.push_back(p.x());
    y.push_back(p.y());
    z.push_back(p.z());
  }
  ply.add("x", std::move(x));
  ply.add("y", std::move(y));
  ply.add("z", std::move(z));
  ply.add("confidence", cloud.confidence);
  return ply;
}

inline RadarCloud load_radar_cloud(const fs::path& path) { return radar_cloud_from_ply(read_ply(path)); }

inline void save_radar_cloud(const RadarCloud& cloud, const fs::path& path,
                             PlyFormat format = PlyFormat::kAscii) {
  cloud.validate();
  write_ply(path, radar_cloud_to_ply(cloud), format);
}

// ---------------------------------------------------------------------------
// Calibration result: text file plus a JSON mirror at <path>.json
// ---------------------------------------------------------------------------

inline std::string encode_calibration(const RigidCalibration& calib) {
  const auto& T = calib.transform;
  std::string out = "# optical->radar rigid calibration: p_radar = R * (scale * p_optical) + t\nrotation";
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out += ' ' + detail::format_double(T.rotation(r, c));
  }
  out += "\ntranslation";
  for (int i = 0; i < 3; ++i) out += ' ' + detail::format_double(T.translation(i));
  out += "\nscale " + detail::format_double(T.scale);
  out += "\nresidual_rmse " + detail::format_double(calib.residual_rmse);
  out += "\nresiduals " + std::to_string(calib.per_point_residuals.size());
  for (double v : calib.per_point_residuals) out += ' ' + detail::format_double(v);
  out += '\n';
  return out;
}

inline RigidCalibration decode_calibration(std::string_view data) {
  RigidCalibration calib;
  bool have_rot = false, have_t = false, have_s = false, have_rmse = false, have_res = false;
  std::size_t pos = 0;
  std::string_view line;
  auto numbers = [](const std::vector<std::string_view>& tok, std::size_t from, std::size_t count) {
    if (tok.size() != from + count) throw MalformedInput("calibration: wrong number of values for " + std::string(tok[0]));
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) {
      if (!detail::parse_double(tok[from + i], v[i])) throw MalformedInput("calibration: not a number");
    }
    return v;
  };
  while (detail::next_line(data, pos, line)) {
    const auto tok = detail::split_ws(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    if (tok[0] == "rotation" && !have_rot) {
      const auto v = numbers(tok, 1, 9);
      for (int i = 0; i < 9; ++i) calib.transform.rotation(i / 3, i % 3) = v[i];
      have_rot = true;
    } else if (tok[0] == "translation" && !have_t) {
      const auto v = numbers(tok, 1, 3);
      calib.transform.translation = Vec3(v[0], v[1], v[2]);
      have_t = true;
    } else if (tok[0] == "scale" && !have_s) {
      calib.transform.scale = numbers(tok, 1, 1)[0];
      have_s = true;
    } else if (tok[0] == "residual_rmse" && !have_rmse) {
      calib.residual_rmse = numbers(tok, 1, 1)[0];
      have_rmse = true;
    } else if (tok[0] == "residuals" && !have_res) {
      long long n = 0;
      if (tok.size() < 2 || !detail::parse_long(tok[1], n) || n < 0 || static_cast<std::size_t>(n) != tok.size() - 2) {
        throw MalformedInput("calibration: bad residual list");
      }
      calib.per_point_residuals = numbers(tok, 2, static_cast<std::size_t>(n));
      have_res = true;
    } else {
      throw MalformedInput("calibration: unexpected line '" + std::string(tok[0]) + "'");
    }
  }
  if (!(have_rot && have_t && have_s && have_rmse && have_res)) throw MalformedInput("calibration: missing fields");
  calib.validate();
  return calib;
}

inline nlohmann::json calibration_to_json(const RigidCalibration& calib) {
  const auto& T = calib.transform;
  nlohmann::json j;
  j["rotation"] = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) j["rotation"].push_back({T.rotation(r, 0), T.rotation(r, 1), T.rotation(r, 2)});
  j["translation"] = {T.translation.x(), T.translation.y(), T.translation.z()};
  j["scale"] = T.scale;
  j["residual_rmse"] = calib.residual_rmse;
  j["per_point_residuals"] = calib.per_point_residuals;
  return j;
}

inline RigidCalibration calibration_from_json(const nlohmann::json& j) {
  try {
    RigidCalibration calib;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) calib.transform.rotation(r, c) = j.at("rotation").at(r).at(c).get<double>();
    }
    for (int i = 0; i < 3; ++i) calib.transform.translation(i) = j.at("translation").at(i).get<double>();
    calib.transform.scale = j.at("scale").get<double>();
    calib.residual_rmse = j.at("residual_rmse").get<double>();
    calib.per_point_residuals = j.at("per_point_residuals").get<std::vector<double>>();
    calib.validate();
    return calib;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInput(std::string("calibration json: ") + e.what());
  }
}

inline void save_calibration(const RigidCalibration& calib, const fs::path& path) {
  calib.validate();
  detail::write_file(path, encode_calibration(calib));
  detail::write_file(fs::path(path.string() + ".json"), calibration_to_json(calib).dump(2) + '\n');
}

inline RigidCalibration load_calibration(const fs::path& path) {
  return decode_calibration(detail::read_file(path));
}

}  // namespace nfcalib
