#pragma once

#include <png.h>

#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sketchdepth/cdt.hpp"
#include "sketchdepth/core.hpp"
#include "sketchdepth/mdr.hpp"
#include "sketchdepth/synth.hpp"
#include "sketchdepth/viridis.hpp"

namespace sketchdepth::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr double kDepthUnitScale = 0.001;  // meters per PNG unit
inline constexpr const char* kDatasetFormat = "sketchdepth-dataset";
inline constexpr int kDatasetVersion = 1;

// ---------------------------------------------------------------- PNG

/// Decoded PNG samples, row-major and channel-interleaved. `bit_depth` and
/// `color_type` describe the file; samples are palette-expanded, alpha
/// stripped, and at least 8 bits.
struct RawPng {
  int width = 0, height = 0, bit_depth = 0, color_type = 0, channels = 0;
  std::vector<std::uint16_t> samples;
};

namespace detail {

inline void png_fail(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<char*>(png_get_error_ptr(png));
  std::snprintf(buf, 256, "%s", msg);
  png_longjmp(png, 1);
}
inline void png_warn(png_structp, png_const_charp) {}

struct File {
  std::FILE* f = nullptr;
  File(const fs::path& p, const char* mode) : f(std::fopen(p.c_str(), mode)) {}
  ~File() {
    if (f) std::fclose(f);
  }
  File(const File&) = delete;
  File& operator=(const File&) = delete;
};

}  // namespace detail

inline RawPng read_png(const fs::path& path) {
  detail::File file(path, "rb");
  if (!file.f) throw IoError("cannot open " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.f) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw FormatError(path.string() + ": not a PNG file");

  char err[256] = "unknown libpng error";
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, err, detail::png_fail, detail::png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng: out of memory");
  }
  RawPng out;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> bytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": " + err);
  }
  png_init_io(png, file.f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.bit_depth = png_get_bit_depth(png, info);
  out.color_type = png_get_color_type(png, info);
  if (out.color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (out.color_type == PNG_COLOR_TYPE_GRAY && out.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (out.color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  out.channels = png_get_channels(png, info);
  const int sample_bytes = png_get_bit_depth(png, info) == 16 ? 2 : 1;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  bytes.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = bytes.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.samples[i] = sample_bytes == 2 ? static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1])
                                       : bytes[i];
  return out;
}

/// Writes gray (1 channel) or RGB (3 channels) samples at 8 or 16 bits.
inline void write_png(const fs::path& path, int width, int height, int channels, int bit_depth,
                      const std::vector<std::uint16_t>& samples) {
  if ((channels != 1 && channels != 3) || (bit_depth != 8 && bit_depth != 16))
    throw DomainError("write_png: unsupported channel count or bit depth");
  if (samples.size() != static_cast<std::size_t>(width) * height * channels)
    throw ShapeError("write_png: sample count does not match the image size");
  const int sample_bytes = bit_depth / 8;
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * sample_bytes;
  std::vector<unsigned char> bytes(rowbytes * height);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (sample_bytes == 2) {
      bytes[2 * i] = static_cast<unsigned char>(samples[i] >> 8);
      bytes[2 * i + 1] = static_cast<unsigned char>(samples[i] & 0xff);
    } else {
      if (samples[i] > 255) throw DomainError("write_png: 8-bit sample out of range");
      bytes[i] = static_cast<unsigned char>(samples[i]);
    }
  }
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = bytes.data() + rowbytes * y;

  detail::File file(path, "wb");
  if (!file.f) throw IoError("cannot write " + path.string());
  char err[256] = "unknown libpng error";
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, err, detail::png_fail, detail::png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string() + ": " + err);
  }
  png_init_io(png, file.f);
  png_set_IHDR(png, info, width, height, bit_depth, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// ---------------------------------------------------------------- depth

/// 16-bit single-channel PNG, value = round(depth / scale), 0 = invalid.
inline void write_depth_png(const fs::path& path, const DepthMap& depth, double scale = kDepthUnitScale) {
  if (!(scale > 0)) throw DomainError("write_depth_png: scale must be positive");
  std::vector<std::uint16_t> v(depth.size());
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (depth[i] == 0) continue;
    const double q = std::round(depth[i] / scale);
    if (q < 1 || q > 65535)
      throw DomainError("write_depth_png: depth " + std::to_string(depth[i]) + " m not representable in 16 bits");
    v[i] = static_cast<std::uint16_t>(q);
  }
  write_png(path, depth.width(), depth.height(), 1, 16, v);
}

inline DepthMap read_depth_png(const fs::path& path, double scale = kDepthUnitScale) {
  const auto raw = read_png(path);
  if (raw.bit_depth != 16 || raw.color_type != PNG_COLOR_TYPE_GRAY)
    throw FormatError(path.string() + ": depth PNG must be 16-bit single-channel (got " +
                      std::to_string(raw.bit_depth) + "-bit, " + std::to_string(raw.channels) + " channel(s))");
  std::vector<double> d(raw.samples.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = raw.samples[i] * scale;
  return DepthMap(raw.width, raw.height, std::move(d));
}

/// Depth quantized exactly as a PNG round trip would store it.
inline DepthMap quantize_depth(const DepthMap& depth, double scale = kDepthUnitScale) {
  std::vector<double> d(depth.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::round(depth[i] / scale) * scale;
  return DepthMap(depth.width(), depth.height(), std::move(d));
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) os.put(static_cast<char>((v >> (8 * b)) & 0xff));
}
inline void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int b = 0; b < 8; ++b) os.put(static_cast<char>((v >> (8 * b)) & 0xff));
}
inline std::uint64_t get_le(const unsigned char* p, int n) {
  std::uint64_t v = 0;
  for (int b = n - 1; b >= 0; --b) v = (v << 8) | p[b];
  return v;
}
inline std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}
inline std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace detail

/// Raw float64 depth: "DMAP", u32 width, u32 height, width*height f64,
/// all little-endian. Lossless, used between CLI stages.
inline void write_dmap(const fs::path& path, const Grid<double>& depth) {
  auto out = detail::open_out(path, std::ios::binary);
  out.write("DMAP", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(depth.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(depth.height()));
  for (double d : depth.vector()) detail::put_f64(out, d);
  if (!out) throw IoError("write failed: " + path.string());
}

inline DepthMap read_dmap(const fs::path& path) {
  const auto bytes = detail::slurp(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "DMAP", 4) != 0)
    throw FormatError(path.string() + ": missing DMAP header");
  const auto w = detail::get_le(bytes.data() + 4, 4), h = detail::get_le(bytes.data() + 8, 4);
  if (bytes.size() != 12 + 8 * w * h)
    throw FormatError(path.string() + ": payload size does not match " + std::to_string(w) + "x" + std::to_string(h));
  std::vector<double> d(w * h);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::bit_cast<double>(detail::get_le(bytes.data() + 12 + 8 * i, 8));
  try {
    return DepthMap(static_cast<int>(w), static_cast<int>(h), std::move(d));
  } catch (const DomainError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Chooses the encoding by extension: ".png" is 16-bit millimeters,
/// anything else is DMAP.
inline void write_depth(const fs::path& path, const DepthMap& depth) {
  if (path.extension() == ".png")
    write_depth_png(path, depth);
  else
    write_dmap(path, depth);
}
inline DepthMap read_depth(const fs::path& path) {
  return path.extension() == ".png" ? read_depth_png(path) : read_dmap(path);
}

// ---------------------------------------------------------------- images

inline void write_image_png(const fs::path& path, const ImageBuffer& image) {
  std::vector<std::uint16_t> v(image.data().size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::uint16_t>(std::lround(image.data()[i] * 255.0));
  write_png(path, image.width(), image.height(), image.channels(), 8, v);
}

/// Gray files load as 1 channel, everything else as RGB; values in [0, 1].
inline ImageBuffer read_image_png(const fs::path& path) {
  const auto raw = read_png(path);
  const double max = raw.bit_depth == 16 ? 65535.0 : 255.0;
  const int ch = raw.channels == 1 ? 1 : 3;
  std::vector<double> d(static_cast<std::size_t>(raw.width) * raw.height * ch);
  for (std::size_t p = 0; p < static_cast<std::size_t>(raw.width) * raw.height; ++p)
    for (int c = 0; c < ch; ++c) d[p * ch + c] = raw.samples[p * raw.channels + c] / max;
  return ImageBuffer(raw.width, raw.height, ch, std::move(d));
}

inline void write_mask_png(const fs::path& path, const ValidMask& mask) {
  std::vector<std::uint16_t> v(mask.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = mask[i] ? 255 : 0;
  write_png(path, mask.width(), mask.height(), 1, 8, v);
}

/// Invalid pixels black; valid pixels through viridis over [min, max] of
/// the valid depths.
inline std::vector<std::uint8_t> colorize_depth(const DepthMap& depth) {
  double lo = INFINITY, hi = -INFINITY;
  for (double d : depth.vector())
    if (d > 0) lo = std::min(lo, d), hi = std::max(hi, d);
  std::vector<std::uint8_t> rgb(depth.size() * 3, 0);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (!(depth[i] > 0)) continue;
    const double t = hi > lo ? (depth[i] - lo) / (hi - lo) : 0.0;
    const auto& c = kViridis[static_cast<std::size_t>(std::lround(t * 255.0))];
    for (int k = 0; k < 3; ++k) rgb[3 * i + k] = c[k];
  }
  return rgb;
}

inline void render_depth_png(const DepthMap& depth, const fs::path& path) {
  const auto rgb = colorize_depth(depth);
  write_png(path, depth.width(), depth.height(), 3, 8, std::vector<std::uint16_t>(rgb.begin(), rgb.end()));
}

// ---------------------------------------------------------------- JSON

namespace detail {

inline json parse_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

/// Field accessors raising FormatError with a JSON-pointer-like location.
inline const json& field(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(where + ": missing field \"" + key + "\"");
  return *it;
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw FormatError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw FormatError(where + ": non-finite number");
  return v;
}

inline int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw FormatError(where + ": expected an integer");
  return j.get<int>();
}

inline std::vector<double> numbers(const json& j, std::size_t n, const std::string& where) {
  if (!j.is_array() || j.size() != n)
    throw FormatError(where + ": expected an array of " + std::to_string(n) + " numbers");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = number(j[i], where + "[" + std::to_string(i) + "]");
  return v;
}

inline const json& array(const json& j, const std::string& key, const std::string& where) {
  const json& a = field(j, key, where);
  if (!a.is_array()) throw FormatError(where + "/" + key + ": expected an array");
  return a;
}

inline Vec3 vec3(const json& j, const std::string& where) {
  const auto v = numbers(j, 3, where);
  return {v[0], v[1], v[2]};
}

inline std::string num(double v) { return json(v).dump(); }

}  // namespace detail

// Features: {"points": [[u,v,z],...], "lines": [[u1,v1,z1,u2,v2,z2],...]}

inline FeatureSet features_from_json(const json& j, const std::string& source = "features") {
  FeatureSet fs;
  const auto& pts = detail::array(j, "points", source);
  const auto& lns = detail::array(j, "lines", source);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::string where = source + "/points[" + std::to_string(i) + "]";
    const auto v = detail::numbers(pts[i], 3, where);
    if (!(v[2] > 0)) throw FormatError(where + ": depth must be positive");
    fs.points.push_back({Vec2(v[0], v[1]), v[2]});
  }
  for (std::size_t i = 0; i < lns.size(); ++i) {
    const std::string where = source + "/lines[" + std::to_string(i) + "]";
    const auto v = detail::numbers(lns[i], 6, where);
    if (!(v[2] > 0) || !(v[5] > 0)) throw FormatError(where + ": endpoint depths must be positive");
    fs.lines.push_back({Vec2(v[0], v[1]), v[2], Vec2(v[3], v[4]), v[5]});
  }
  return fs;
}

/// Canonical text: one feature per line, shortest round-trip numbers.
inline std::string features_to_string(const FeatureSet& fs) {
  std::ostringstream os;
  auto list = [&](const char* key, std::size_t n, auto&& row) {
    os << "  \"" << key << "\": [";
    for (std::size_t i = 0; i < n; ++i) os << (i ? ",\n    " : "\n    ") << row(i);
    os << (n ? "\n  ]" : "]");
  };
  os << "{\n";
  list("points", fs.points.size(), [&](std::size_t i) {
    const auto& p = fs.points[i];
    return "[" + detail::num(p.pixel.x()) + ", " + detail::num(p.pixel.y()) + ", " + detail::num(p.depth) + "]";
  });
  os << ",\n";
  list("lines", fs.lines.size(), [&](std::size_t i) {
    const auto& l = fs.lines[i];
    return "[" + detail::num(l.start.x()) + ", " + detail::num(l.start.y()) + ", " + detail::num(l.start_depth) + ", " +
           detail::num(l.end.x()) + ", " + detail::num(l.end.y()) + ", " + detail::num(l.end_depth) + "]";
  });
  os << "\n}\n";
  return os.str();
}

inline FeatureSet read_features(const fs::path& path) {
  return features_from_json(detail::parse_json(path), path.string());
}
inline void write_features(const fs::path& path, const FeatureSet& fs) {
  detail::write_text(path, features_to_string(fs));
}

// Intrinsics: {"fx","fy","cx","cy","width","height"}

inline json to_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

inline Intrinsics intrinsics_from_json(const json& j, const std::string& where = "intrinsics") {
  auto n = [&](const char* key) { return detail::number(detail::field(j, key, where), where + "/" + key); };
  auto i = [&](const char* key) { return detail::integer(detail::field(j, key, where), where + "/" + key); };
  try {
    return Intrinsics(n("fx"), n("fy"), n("cx"), n("cy"), i("width"), i("height"));
  } catch (const DomainError& e) {
    throw FormatError(where + ": " + e.what());
  }
}

inline Intrinsics read_intrinsics(const fs::path& path) {
  return intrinsics_from_json(detail::parse_json(path), path.string());
}
inline void write_intrinsics(const fs::path& path, const Intrinsics& k) {
  detail::write_text(path, to_json(k).dump(2) + "\n");
}

// Pose (world from camera): {"rotation": [9, row-major], "translation": [3]}

inline json to_json(const Pose& p) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(p.rotation()(i, k));
  const Vec3& t = p.translation();
  return {{"rotation", r}, {"translation", {t.x(), t.y(), t.z()}}};
}

inline Pose pose_from_json(const json& j, const std::string& where = "pose") {
  const auto r = detail::numbers(detail::field(j, "rotation", where), 9, where + "/rotation");
  const Vec3 t = detail::vec3(detail::field(j, "translation", where), where + "/translation");
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) m(i, k) = r[3 * i + k];
  try {
    return Pose(m, t);
  } catch (const DomainError& e) {
    throw FormatError(where + ": " + e.what());
  }
}

inline Pose read_pose(const fs::path& path) { return pose_from_json(detail::parse_json(path), path.string()); }
inline void write_pose(const fs::path& path, const Pose& p) { detail::write_text(path, to_json(p).dump(2) + "\n"); }

// Mesh: {"vertices": [[u,v,z]], "edges": [[a,b,constrained]], "facets": [[i,j,k]]}

inline json to_json(const cdt::Mesh& m) {
  json v = json::array(), e = json::array(), f = json::array();
  for (const auto& s : m.vertices) v.push_back({s.pos.x(), s.pos.y(), s.depth});
  for (const auto& x : m.edges) e.push_back({x.a, x.b, x.constrained});
  for (const auto& x : m.facets) f.push_back({x[0], x[1], x[2]});
  return {{"vertices", v}, {"edges", e}, {"facets", f}};
}

inline cdt::Mesh mesh_from_json(const json& j, const std::string& where = "mesh") {
  cdt::Mesh m;
  const auto& v = detail::array(j, "vertices", where);
  const auto& e = detail::array(j, "edges", where);
  const auto& f = detail::array(j, "facets", where);
  const int nv = static_cast<int>(v.size());
  auto index = [&](const json& x, const std::string& w) {
    const int i = detail::integer(x, w);
    if (i < 0 || i >= nv) throw FormatError(w + ": vertex index out of range");
    return i;
  };
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto x = detail::numbers(v[i], 3, where + "/vertices[" + std::to_string(i) + "]");
    m.vertices.push_back({Vec2(x[0], x[1]), x[2]});
  }
  for (std::size_t i = 0; i < e.size(); ++i) {
    const std::string w = where + "/edges[" + std::to_string(i) + "]";
    if (!e[i].is_array() || e[i].size() != 3 || !e[i][2].is_boolean())
      throw FormatError(w + ": expected [a, b, constrained]");
    m.edges.push_back({index(e[i][0], w + "[0]"), index(e[i][1], w + "[1]"), e[i][2].get<bool>()});
  }
  for (std::size_t i = 0; i < f.size(); ++i) {
    const std::string w = where + "/facets[" + std::to_string(i) + "]";
    if (!f[i].is_array() || f[i].size() != 3) throw FormatError(w + ": expected [i, j, k]");
    m.facets.push_back({index(f[i][0], w + "[0]"), index(f[i][1], w + "[1]"), index(f[i][2], w + "[2]")});
  }
  return m;
}

inline cdt::Mesh read_mesh(const fs::path& path) { return mesh_from_json(detail::parse_json(path), path.string()); }
inline void write_mesh(const fs::path& path, const cdt::Mesh& m) { detail::write_text(path, to_json(m).dump() + "\n"); }

// ---------------------------------------------------------------- MDR params

/// Sidecar path for a parameter file: "<path>.json".
inline fs::path params_sidecar(const fs::path& path) { return fs::path(path.string() + ".json"); }

/// Flat little-endian float64 values plus a JSON sidecar with the tensor
/// layout.
inline void write_mdr_params(const fs::path& path, const mdr::MdrParams& p) {
  {
    auto out = detail::open_out(path, std::ios::binary);
    for (double v : p.flat()) detail::put_f64(out, v);
    if (!out) throw IoError("write failed: " + path.string());
  }
  json tensors = json::array();
  for (const auto& t : mdr::MdrParams::layout())
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}, {"size", t.size}});
  const json side{{"format", "sketchdepth-mdr-params"},
                  {"version", 1},
                  {"dtype", "float64-le"},
                  {"count", mdr::MdrParams::flat_size()},
                  {"tensors", tensors}};
  detail::write_text(params_sidecar(path), side.dump(2) + "\n");
}

inline mdr::MdrParams read_mdr_params(const fs::path& path) {
  const auto bytes = detail::slurp(path);
  const std::size_t n = mdr::MdrParams::flat_size();
  if (bytes.size() != 8 * n)
    throw FormatError(path.string() + ": expected " + std::to_string(8 * n) + " bytes, got " +
                      std::to_string(bytes.size()));
  if (fs::exists(params_sidecar(path))) {
    const auto side = detail::parse_json(params_sidecar(path));
    const std::string where = params_sidecar(path).string();
    if (!side.is_object() || side.value("format", "") != "sketchdepth-mdr-params")
      throw FormatError(where + ": unrecognized format");
    if (detail::integer(detail::field(side, "count", where), where + "/count") != static_cast<int>(n))
      throw FormatError(where + ": parameter count does not match this build");
  }
  std::vector<double> flat(n);
  for (std::size_t i = 0; i < n; ++i) flat[i] = std::bit_cast<double>(detail::get_le(bytes.data() + 8 * i, 8));
  auto p = mdr::MdrParams::from_flat(std::move(flat));
  p.validate();
  return p;
}

// ---------------------------------------------------------------- dataset

struct FrameRecord {
  int id = 0;
  std::string image, features, pose;
  std::optional<std::string> gt_depth;
};

struct DatasetManifest {
  int version = kDatasetVersion;
  double depth_unit_scale = kDepthUnitScale;
  Intrinsics intrinsics;
  std::vector<FrameRecord> frames;
};

struct Frame {
  ImageBuffer image;
  FeatureSet features;
  Pose pose;
  std::optional<DepthMap> gt_depth;
};

inline json to_json(const DatasetManifest& m) {
  json frames = json::array();
  for (const auto& f : m.frames) {
    json j{{"id", f.id}, {"image", f.image}, {"features", f.features}, {"pose", f.pose}};
    if (f.gt_depth) j["gt_depth"] = *f.gt_depth;
    frames.push_back(j);
  }
  return {{"format", kDatasetFormat},
          {"version", m.version},
          {"depth_unit_scale", m.depth_unit_scale},
          {"intrinsics", to_json(m.intrinsics)},
          {"frames", frames}};
}

/// Parses `<dir>/manifest.json` and checks that referenced files exist.
inline DatasetManifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  const json j = detail::parse_json(path);
  const std::string where = path.string();
  if (!j.is_object() || j.value("format", "") != kDatasetFormat) throw FormatError(where + ": unrecognized format");
  DatasetManifest m;
  m.version = detail::integer(detail::field(j, "version", where), where + "/version");
  if (m.version != kDatasetVersion) throw FormatError(where + ": unsupported version " + std::to_string(m.version));
  m.depth_unit_scale = detail::number(detail::field(j, "depth_unit_scale", where), where + "/depth_unit_scale");
  if (!(m.depth_unit_scale > 0)) throw FormatError(where + "/depth_unit_scale: must be positive");
  m.intrinsics = intrinsics_from_json(detail::field(j, "intrinsics", where), where + "/intrinsics");
  const auto& frames = detail::array(j, "frames", where);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string w = where + "/frames[" + std::to_string(i) + "]";
    auto str = [&](const char* key) {
      const json& s = detail::field(frames[i], key, w);
      if (!s.is_string()) throw FormatError(w + "/" + key + ": expected a string");
      if (!fs::exists(dir / s.get<std::string>()))
        throw FormatError(w + "/" + key + ": file not found: " + s.get<std::string>());
      return s.get<std::string>();
    };
    FrameRecord r;
    r.id = detail::integer(detail::field(frames[i], "id", w), w + "/id");
    if (!m.frames.empty() && r.id <= m.frames.back().id) throw FormatError(w + "/id: frame ids must increase");
    r.image = str("image");
    r.features = str("features");
    r.pose = str("pose");
    if (frames[i].contains("gt_depth")) r.gt_depth = str("gt_depth");
    m.frames.push_back(std::move(r));
  }
  return m;
}

inline void write_manifest(const fs::path& dir, const DatasetManifest& m) {
  detail::write_text(dir / "manifest.json", to_json(m).dump(2) + "\n");
}

/// Loads one frame and checks its dimensions against the intrinsics.
inline Frame load_frame(const fs::path& dir, const DatasetManifest& m, std::size_t index) {
  if (index >= m.frames.size()) throw DomainError("load_frame: frame index out of range");
  const auto& r = m.frames[index];
  Frame f{read_image_png(dir / r.image), read_features(dir / r.features), read_pose(dir / r.pose), std::nullopt};
  const int w = m.intrinsics.width, h = m.intrinsics.height;
  if (f.image.width() != w || f.image.height() != h)
    throw ShapeError(r.image + ": image size differs from the intrinsics");
  if (r.gt_depth) {
    f.gt_depth = read_depth_png(dir / *r.gt_depth, m.depth_unit_scale);
    if (!f.gt_depth->same_shape(w, h)) throw ShapeError(*r.gt_depth + ": depth size differs from the intrinsics");
  }
  return f;
}

/// Index of the frame with the given id.
inline std::size_t frame_index(const DatasetManifest& m, int id) {
  for (std::size_t i = 0; i < m.frames.size(); ++i)
    if (m.frames[i].id == id) return i;
  throw DomainError("no frame with id " + std::to_string(id));
}

// ---------------------------------------------------------------- scenes

struct FeatureSampling {
  int points = 140;
  int lines = 10;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;
  bool corners = false;  // add exact features at the image corners
};

/// A scene plus the camera poses to render and the feature sampling.
struct SceneFile {
  synth::SceneSpec scene;
  std::vector<Pose> views;  // first entry is the reference view
  FeatureSampling sampling;
};

inline Vec3 vec3_or(const json& j, const char* key, const Vec3& fallback, const std::string& where) {
  return j.contains(key) ? detail::vec3(j[key], where + "/" + key) : fallback;
}

/// Either {"preset": "box-wall"|"fronto"|"slanted", ...} or an explicit
/// scene with "camera", "planes", "boxes", "texture", "views", "features".
inline SceneFile scene_from_json(const json& j, std::uint64_t seed_override = 0, bool override_seed = false,
                                 const std::string& where = "scene") {
  if (!j.is_object()) throw FormatError(where + ": expected an object");
  SceneFile sf;
  const std::uint64_t seed = override_seed ? seed_override : j.value("seed", std::uint64_t{0});
  if (j.contains("preset")) {
    const std::string preset = j["preset"].is_string() ? j["preset"].get<std::string>() : "";
    const int w = j.value("width", 640), h = j.value("height", 480);
    if (preset == "box-wall") {
      try {
        sf.scene = synth::box_wall_scene(seed, w, h, j.value("boxes", 2));
      } catch (const DomainError& e) {
        throw SpecError(where + ": " + e.what());
      }
    } else if (preset == "fronto" || preset == "slanted") {
      sf.scene.camera = Intrinsics(0.82 * w, 0.82 * w, (w - 1) / 2.0, (h - 1) / 2.0, w, h);
      const Vec3 n = preset == "fronto" ? Vec3::UnitZ() : Vec3(0.25, -0.3, 1.0).normalized();
      sf.scene.planes.push_back(synth::plane(n, j.value("distance", 3.0)));
      sf.scene.seed = seed;
      sf.sampling.lines = 0;
      sf.sampling.corners = true;
    } else {
      throw SpecError(where + "/preset: unknown preset \"" + preset + "\"");
    }
  } else {
    auto& s = sf.scene;
    s.seed = seed;
    s.camera = intrinsics_from_json(detail::field(j, "camera", where), where + "/camera");
    if (j.contains("pose")) s.pose = pose_from_json(j["pose"], where + "/pose");
    if (j.contains("planes")) {
      const auto& ps = detail::array(j, "planes", where);
      for (std::size_t i = 0; i < ps.size(); ++i) {
        const std::string w = where + "/planes[" + std::to_string(i) + "]";
        synth::PlaneSpec p;
        p.normal = detail::vec3(detail::field(ps[i], "normal", w), w + "/normal");
        if (!(p.normal.norm() > 0)) throw SpecError(w + "/normal: must be non-zero");
        p.normal.normalize();
        p.offset = detail::number(detail::field(ps[i], "offset", w), w + "/offset");
        p.albedo = vec3_or(ps[i], "albedo", p.albedo, w);
        if (ps[i].contains("bounds")) {
          const auto& b = ps[i]["bounds"];
          p.bounds = std::pair{detail::vec3(detail::field(b, "min", w + "/bounds"), w + "/bounds/min"),
                               detail::vec3(detail::field(b, "max", w + "/bounds"), w + "/bounds/max")};
        }
        s.planes.push_back(p);
      }
    }
    if (j.contains("boxes")) {
      const auto& bs = detail::array(j, "boxes", where);
      for (std::size_t i = 0; i < bs.size(); ++i) {
        const std::string w = where + "/boxes[" + std::to_string(i) + "]";
        synth::BoxSpec b;
        b.center = detail::vec3(detail::field(bs[i], "center", w), w + "/center");
        b.size = detail::vec3(detail::field(bs[i], "size", w), w + "/size");
        if ((b.size.array() <= 0).any()) throw SpecError(w + "/size: extents must be positive");
        b.albedo = vec3_or(bs[i], "albedo", b.albedo, w);
        s.boxes.push_back(b);
      }
    }
  }
  if (j.contains("texture")) {
    const auto& t = j["texture"];
    auto& tx = sf.scene.texture;
    tx.frequency = t.value("frequency", tx.frequency);
    tx.contrast = t.value("contrast", tx.contrast);
    tx.octaves = t.value("octaves", tx.octaves);
    if (!(tx.frequency > 0) || !(tx.contrast >= 0 && tx.contrast <= 1) || tx.octaves < 1)
      throw SpecError(where + "/texture: invalid parameters");
  }
  sf.views.push_back(sf.scene.pose);
  if (j.contains("views")) {
    const auto& vs = detail::array(j, "views", where);
    sf.views.clear();
    for (std::size_t i = 0; i < vs.size(); ++i) sf.views.push_back(pose_from_json(vs[i], where + "/views[" + std::to_string(i) + "]"));
    if (sf.views.empty()) throw SpecError(where + "/views: at least one view is required");
  }
  if (j.contains("features")) {
    const auto& f = j["features"];
    auto& fs = sf.sampling;
    fs.points = f.value("points", fs.points);
    fs.lines = f.value("lines", fs.lines);
    fs.noise_sigma = f.value("noise_sigma", fs.noise_sigma);
    fs.seed = f.value("seed", fs.seed);
    fs.corners = f.value("corners", fs.corners);
  }
  if (override_seed) sf.sampling.seed = seed_override + 1;
  return sf;
}

inline SceneFile read_scene(const fs::path& path, std::optional<std::uint64_t> seed = std::nullopt) {
  return scene_from_json(detail::parse_json(path), seed.value_or(0), seed.has_value(), path.string());
}

/// Renders every view of the scene into `dir`: image.png, depth.png
/// (gt, mm), features.json, pose.json per frame, plus intrinsics.json and
/// manifest.json.
inline DatasetManifest write_synth_dataset(const fs::path& dir, const SceneFile& sf) {
  fs::create_directories(dir);
  DatasetManifest m;
  m.intrinsics = sf.scene.camera;
  for (std::size_t i = 0; i < sf.views.size(); ++i) {
    synth::SceneSpec view = sf.scene;
    view.pose = sf.views[i];
    const auto r = synth::render(view);
    auto fs =
        synth::sample_features(view, sf.sampling.points, sf.sampling.lines, sf.sampling.noise_sigma, sf.sampling.seed + i);
    if (sf.sampling.corners) {
      const auto c = synth::corner_points(view);
      fs.points.insert(fs.points.begin(), c.begin(), c.end());
    }
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu", i);
    fs::create_directories(dir / name);
    FrameRecord rec;
    rec.id = static_cast<int>(i);
    rec.image = std::string(name) + "/image.png";
    rec.gt_depth = std::string(name) + "/depth.png";
    rec.features = std::string(name) + "/features.json";
    rec.pose = std::string(name) + "/pose.json";
    write_image_png(dir / rec.image, r.rgb);
    write_depth_png(dir / *rec.gt_depth, r.depth);
    write_features(dir / rec.features, fs);
    write_pose(dir / rec.pose, view.pose);
    m.frames.push_back(rec);
  }
  write_intrinsics(dir / "intrinsics.json", m.intrinsics);
  write_manifest(dir, m);
  return m;
}

}  // namespace sketchdepth::io
