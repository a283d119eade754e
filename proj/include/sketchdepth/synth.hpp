#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "sketchdepth/cdt.hpp"
#include "sketchdepth/core.hpp"
#include "sketchdepth/fill.hpp"
#include "sketchdepth/meshdepth.hpp"
#include "sketchdepth/metrics.hpp"

namespace sketchdepth::synth {

/// Infinite plane n.X = offset in world coordinates, optionally limited to
/// an axis-aligned world box.
struct PlaneSpec {
  Vec3 normal = Vec3::UnitZ();
  double offset = 1.0;
  Vec3 albedo = Vec3(0.8, 0.8, 0.8);
  std::optional<std::pair<Vec3, Vec3>> bounds;
};

inline PlaneSpec plane(const Vec3& normal, double offset) {
  PlaneSpec p;
  p.normal = normal;
  p.offset = offset;
  return p;
}

/// Axis-aligned box; `size` holds the full edge lengths.
struct BoxSpec {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();
  Vec3 albedo = Vec3(0.7, 0.5, 0.4);
};

/// Band-limited 3D value noise evaluated at world points, so the texture
/// sticks to the surfaces across views.
struct TextureSpec {
  double frequency = 6.0;  // lattice cells per meter
  double contrast = 0.45;
  int octaves = 2;
};

struct SceneSpec {
  std::vector<PlaneSpec> planes;
  std::vector<BoxSpec> boxes;
  Intrinsics camera;
  Pose pose;  // world from camera
  TextureSpec texture;
  std::uint64_t seed = 0;
};

struct Hit {
  double depth = 0;  // camera z
  int surface = -1;  // planes first, then 6 faces per box
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
};

struct Rendering {
  ImageBuffer rgb;
  DepthMap depth;
};

inline constexpr double kMinDepth = 0.3, kMaxDepth = 20.0;

namespace detail {

inline bool inside_box(const Vec3& p, const Vec3& lo, const Vec3& hi, double tol) {
  return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
}

inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double lattice(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
  std::uint64_t h = mix(seed);
  h = mix(h ^ static_cast<std::uint64_t>(x));
  h = mix(h ^ static_cast<std::uint64_t>(y));
  h = mix(h ^ static_cast<std::uint64_t>(z));
  return static_cast<double>(h >> 11) * 0x1p-53;
}

inline double value_noise(const Vec3& p, std::uint64_t seed) {
  const Vec3 f = p.array().floor();
  const Vec3 t = p - f;
  const Vec3 s = t.array() * t.array() * (3.0 - 2.0 * t.array());
  const auto ix = static_cast<std::int64_t>(f.x()), iy = static_cast<std::int64_t>(f.y()),
             iz = static_cast<std::int64_t>(f.z());
  double acc = 0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? s.x() : 1 - s.x()) * (dy ? s.y() : 1 - s.y()) * (dz ? s.z() : 1 - s.z());
        acc += w * lattice(ix + dx, iy + dy, iz + dz, seed);
      }
  return acc;
}

}  // namespace detail

/// World-space ray origin and direction for pixel (u, v); the direction is
/// scaled so the hit parameter equals camera-frame depth.
inline std::pair<Vec3, Vec3> pixel_ray(const SceneSpec& s, double u, double v) {
  return {s.pose.translation(), s.pose.rotation() * s.camera.ray(u, v)};
}

/// Nearest surface along the ray through (u, v), if any.
inline std::optional<Hit> cast(const SceneSpec& s, double u, double v) {
  const auto [o, d] = pixel_ray(s, u, v);
  std::optional<Hit> best;
  auto offer = [&](double t, int surface, const Vec3& n) {
    if (!(t > 0) || (best && t >= best->depth)) return;
    best = Hit{t, surface, o + t * d, n};
  };
  for (std::size_t i = 0; i < s.planes.size(); ++i) {
    const auto& p = s.planes[i];
    const double nd = p.normal.dot(d);
    if (nd == 0) continue;
    const double t = (p.offset - p.normal.dot(o)) / nd;
    if (p.bounds && !detail::inside_box(o + t * d, p.bounds->first, p.bounds->second, 1e-12)) continue;
    offer(t, static_cast<int>(i), p.normal);
  }
  for (std::size_t b = 0; b < s.boxes.size(); ++b) {
    const Vec3 lo = s.boxes[b].center - s.boxes[b].size / 2, hi = s.boxes[b].center + s.boxes[b].size / 2;
    double t0 = -INFINITY, t1 = INFINITY;
    int axis = -1, side = 0;
    for (int a = 0; a < 3; ++a) {
      if (d[a] == 0) {
        if (o[a] < lo[a] || o[a] > hi[a]) t0 = INFINITY;
        continue;
      }
      double ta = (lo[a] - o[a]) / d[a], tb = (hi[a] - o[a]) / d[a];
      int sa = 0;
      if (ta > tb) std::swap(ta, tb), sa = 1;
      if (ta > t0) t0 = ta, axis = a, side = sa;
      t1 = std::min(t1, tb);
    }
    if (axis < 0 || t0 > t1) continue;
    Vec3 n = Vec3::Zero();
    n[axis] = side ? 1.0 : -1.0;
    offer(t0, static_cast<int>(s.planes.size() + 6 * b + 2 * axis + side), n);
  }
  return best;
}

inline Vec3 shade(const SceneSpec& s, const Hit& hit) {
  const Vec3 albedo = hit.surface < static_cast<int>(s.planes.size())
                          ? s.planes[hit.surface].albedo
                          : s.boxes[(hit.surface - s.planes.size()) / 6].albedo;
  Vec3 n = hit.normal.normalized();
  if (n.dot(s.pose.translation() - hit.point) < 0) n = -n;
  const Vec3 light = Vec3(-0.3, -1.0, -0.6).normalized();  // towards the light, world y points down
  const double lambert = 0.45 + 0.55 * std::max(0.0, n.dot(light));
  double noise = 0, amp = 1, norm = 0;
  for (int o = 0; o < s.texture.octaves; ++o) {
    noise += amp * detail::value_noise(hit.point * s.texture.frequency * std::pow(2.0, o), s.seed + 7919 * o);
    norm += amp;
    amp *= 0.5;
  }
  noise /= norm;
  const double tex = 1.0 - s.texture.contrast + s.texture.contrast * 2.0 * noise;
  return (albedo * lambert * tex).cwiseMax(0.0).cwiseMin(1.0);
}

/// Ray-cast RGB and ground-truth depth. Every pixel must hit a surface at a
/// depth within [0.3, 20] m.
inline Rendering render(const SceneSpec& s) {
  const int w = s.camera.width, h = s.camera.height;
  std::vector<double> rgb(static_cast<std::size_t>(w) * h * 3), depth(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto hit = cast(s, x, y);
      if (!hit) throw SpecError("render: pixel (" + std::to_string(x) + ", " + std::to_string(y) + ") hits nothing");
      if (hit->depth < kMinDepth || hit->depth > kMaxDepth)
        throw SpecError("render: depth " + std::to_string(hit->depth) + " m outside [0.3, 20]");
      depth[static_cast<std::size_t>(y) * w + x] = hit->depth;
      const Vec3 c = shade(s, *hit);
      for (int k = 0; k < 3; ++k) rgb[(static_cast<std::size_t>(y) * w + x) * 3 + k] = c[k];
    }
  return {ImageBuffer(w, h, 3, std::move(rgb)), DepthMap(w, h, std::move(depth))};
}

enum class EdgeKind { Intersection, Crease, Silhouette };

/// A candidate line feature: visible image segment of a 3D scene edge.
struct EdgeCandidate {
  Vec3 a, b;  // world endpoints of the visible run
  Vec2 pa, pb;
  double za = 0, zb = 0;
  EdgeKind kind = EdgeKind::Crease;
  double length() const { return (pb - pa).norm(); }
};

namespace detail {

inline bool point_visible(const SceneSpec& s, const Vec3& world) {
  const Vec3 c = s.pose.inverse().apply(world);
  if (!(c.z() > 0)) return false;
  const auto& k = s.camera;
  const double u = k.fx * c.x() / c.z() + k.cx, v = k.fy * c.y() / c.z() + k.cy;
  if (!(u >= 0 && u <= k.width - 1 && v >= 0 && v <= k.height - 1)) return false;
  const auto hit = cast(s, u, v);
  return hit && hit->depth >= c.z() * (1 - 1e-9);
}

/// Longest visible run of the segment a-b, endpoints refined by bisection.
inline std::optional<EdgeCandidate> visible_run(const SceneSpec& s, const Vec3& a, const Vec3& b, EdgeKind kind,
                                                double min_pixels) {
  constexpr int kSamples = 1500;
  auto at = [&](double t) -> Vec3 { return a + t * (b - a); };
  int best_lo = -1, best_hi = -1, lo = -1;
  for (int i = 0; i <= kSamples + 1; ++i) {
    const bool vis = i <= kSamples && point_visible(s, at(static_cast<double>(i) / kSamples));
    if (vis && lo < 0) lo = i;
    if (!vis && lo >= 0) {
      if (best_lo < 0 || i - 1 - lo > best_hi - best_lo) best_lo = lo, best_hi = i - 1;
      lo = -1;
    }
  }
  if (best_lo < 0 || best_hi == best_lo) return std::nullopt;
  auto refine = [&](double inside, double outside) {
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (inside + outside);
      (point_visible(s, at(mid)) ? inside : outside) = mid;
    }
    return inside;
  };
  const double t0 = best_lo == 0 ? 0.0 : refine(best_lo / double(kSamples), (best_lo - 1) / double(kSamples));
  const double t1 = best_hi == kSamples ? 1.0 : refine(best_hi / double(kSamples), (best_hi + 1) / double(kSamples));
  EdgeCandidate e;
  e.a = at(t0);
  e.b = at(t1);
  const auto pa = project(s.pose.inverse().apply(e.a), s.camera), pb = project(s.pose.inverse().apply(e.b), s.camera);
  e.pa = pa.pixel.cwiseMax(Vec2(0, 0)).cwiseMin(Vec2(s.camera.width - 1, s.camera.height - 1));
  e.pb = pb.pixel.cwiseMax(Vec2(0, 0)).cwiseMin(Vec2(s.camera.width - 1, s.camera.height - 1));
  e.za = pa.depth;
  e.zb = pb.depth;
  e.kind = kind;
  if (e.length() < min_pixels) return std::nullopt;
  return e;
}

/// Far-apart points of the plane-plane intersection line inside the
/// region the camera can see.
inline std::optional<std::pair<Vec3, Vec3>> plane_intersection(const PlaneSpec& p, const PlaneSpec& q,
                                                              const Vec3& around) {
  const Vec3 dir = p.normal.cross(q.normal);
  if (dir.norm() < 1e-9) return std::nullopt;
  Eigen::Matrix3d m;
  m.row(0) = p.normal.transpose();
  m.row(1) = q.normal.transpose();
  m.row(2) = dir.transpose();
  const Vec3 x0 = m.fullPivLu().solve(Vec3(p.offset, q.offset, dir.dot(around)));
  const Vec3 u = dir.normalized();
  return std::pair{x0 - 2 * kMaxDepth * u, x0 + 2 * kMaxDepth * u};
}

}  // namespace detail

/// Visible scene edges: box silhouettes, then plane-plane intersections,
/// then box creases; each group longest first.
inline std::vector<EdgeCandidate> edge_candidates(const SceneSpec& s, double min_pixels = 8.0) {
  std::vector<EdgeCandidate> sil, crease, inter;
  const Vec3 cam = s.pose.translation();
  for (const auto& box : s.boxes) {
    const Vec3 lo = box.center - box.size / 2, hi = box.center + box.size / 2;
    // Edge along axis a at the fixed coordinates of the other two axes.
    for (int a = 0; a < 3; ++a) {
      const int b = (a + 1) % 3, c = (a + 2) % 3;
      for (int sb = 0; sb < 2; ++sb)
        for (int sc = 0; sc < 2; ++sc) {
          Vec3 p0, p1;
          p0[a] = lo[a], p1[a] = hi[a];
          p0[b] = p1[b] = sb ? hi[b] : lo[b];
          p0[c] = p1[c] = sc ? hi[c] : lo[c];
          // Faces meeting at the edge: normal +-b and +-c.
          const bool fb = (sb ? cam[b] - hi[b] : lo[b] - cam[b]) > 0;
          const bool fc = (sc ? cam[c] - hi[c] : lo[c] - cam[c]) > 0;
          if (!fb && !fc) continue;
          const auto kind = fb != fc ? EdgeKind::Silhouette : EdgeKind::Crease;
          if (auto e = detail::visible_run(s, p0, p1, kind, min_pixels)) (fb != fc ? sil : crease).push_back(*e);
        }
    }
  }
  const Vec3 ahead = s.pose.apply(Vec3(0, 0, 3));
  for (std::size_t i = 0; i < s.planes.size(); ++i)
    for (std::size_t j = i + 1; j < s.planes.size(); ++j)
      if (auto seg = detail::plane_intersection(s.planes[i], s.planes[j], ahead))
        if (auto e = detail::visible_run(s, seg->first, seg->second, EdgeKind::Intersection, min_pixels)) inter.push_back(*e);
  auto by_length = [](const EdgeCandidate& x, const EdgeCandidate& y) { return x.length() > y.length(); };
  std::stable_sort(sil.begin(), sil.end(), by_length);
  std::stable_sort(crease.begin(), crease.end(), by_length);
  std::stable_sort(inter.begin(), inter.end(), by_length);
  std::vector<EdgeCandidate> all = sil;
  all.insert(all.end(), inter.begin(), inter.end());
  all.insert(all.end(), crease.begin(), crease.end());
  return all;
}

/// Point features uniform over the image and line features on scene edges,
/// with Gaussian depth noise. Fewer lines than requested are returned when
/// the scene has fewer visible edges.
inline FeatureSet sample_features(const SceneSpec& s, int points, int lines, double noise_sigma,
                                  std::uint64_t seed) {
  if (points < 0 || lines < 0) throw DomainError("sample_features: counts must be >= 0");
  if (points + lines < 3) throw DomainError("sample_features: at least 3 features are required");
  if (!(noise_sigma >= 0)) throw DomainError("sample_features: noise sigma must be >= 0");
  std::mt19937_64 rng(seed), noise_rng(detail::mix(seed));
  std::normal_distribution<double> noise(0.0, 1.0);
  auto noisy = [&](double z) {
    if (noise_sigma == 0) return z;
    return std::max(0.05 * z, z + noise_sigma * noise(noise_rng));
  };
  FeatureSet fs;
  if (lines > 0) {
    const auto edges = edge_candidates(s);
    if (edges.empty()) throw SpecError("sample_features: scene has no visible edges for line features");
    for (int i = 0; i < lines && i < static_cast<int>(edges.size()); ++i) {
      const auto& e = edges[i];
      const double za = noisy(e.za);
      fs.lines.push_back({e.pa, za, e.pb, noisy(e.zb)});
    }
  }
  std::uniform_real_distribution<double> ux(0.0, s.camera.width - 1.0), uy(0.0, s.camera.height - 1.0);
  while (static_cast<int>(fs.points.size()) < points) {
    const Vec2 p(ux(rng), uy(rng));
    const auto hit = cast(s, p.x(), p.y());
    if (!hit) continue;
    fs.points.push_back({p, noisy(hit->depth)});
  }
  return fs;
}

/// Noiseless point features at the four image corners, so the mesh hull
/// spans the whole frame.
inline std::vector<PointFeature> corner_points(const SceneSpec& s) {
  const double u1 = s.camera.width - 1.0, v1 = s.camera.height - 1.0;
  std::vector<PointFeature> out;
  for (const Vec2& c : {Vec2(0, 0), Vec2(u1, 0), Vec2(u1, v1), Vec2(0, v1)}) {
    const auto hit = cast(s, c.x(), c.y());
    if (!hit) throw SpecError("corner_points: corner ray misses the scene");
    out.push_back({c, hit->depth});
  }
  return out;
}

/// Scene: slanted back wall, floor, one side wall, and `boxes` boxes standing on the floor,
/// seen from a slightly rotated camera.
inline SceneSpec box_wall_scene(std::uint64_t seed, int width = 640, int height = 480, int boxes = 2) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  SceneSpec s;
  s.seed = seed;
  const double f = 0.82 * width;
  s.camera = Intrinsics(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height);
  const Mat3 r =
      (Eigen::AngleAxisd(uni(-0.12, 0.12), Vec3::UnitY()) * Eigen::AngleAxisd(uni(-0.18, -0.08), Vec3::UnitX()))
          .toRotationMatrix();
  s.pose = Pose(r, Vec3::Zero());
  const double yaw = uni(-0.45, 0.45);
  s.planes.push_back({Vec3(std::sin(yaw), 0, std::cos(yaw)), uni(4.0, 6.0), Vec3(0.85, 0.82, 0.75), std::nullopt});
  s.planes.push_back({Vec3(0, -1, 0), -uni(1.2, 1.6), Vec3(0.55, 0.6, 0.7), std::nullopt});
  const double side = uni(0, 1) < 0.5 ? -1.0 : 1.0;
  s.planes.push_back({Vec3(side, 0, 0), side * uni(2.0, 2.6), Vec3(0.75, 0.7, 0.6), std::nullopt});
  const double floor_y = -s.planes[1].offset;
  for (int b = 0; b < boxes; ++b) {
    const Vec3 size(uni(0.5, 1.0), uni(0.5, 1.2), uni(0.4, 0.9));
    const double x = (b - (boxes - 1) / 2.0) * 1.3 + uni(-0.25, 0.25);
    const Vec3 center(x, floor_y - size.y() / 2, uni(2.4, 3.4));
    s.boxes.push_back({center, size, Vec3(uni(0.4, 0.9), uni(0.3, 0.8), uni(0.3, 0.8))});
  }
  return s;
}

enum class Split { P, PL, PLM };

struct AblationConfig {
  int budget = 150;
  int lines = 10;
  double noise_sigma = 0.0;
  std::uint64_t feature_seed = 1;
  InterpolationMode mode = InterpolationMode::Planar3D;
};

struct AblationResult {
  EvalReport p, pl, plm;
  int lines_used = 0;
};

/// Hole-filled mesh depth: interpolated inside the hull, nearest valid
/// value outside.
inline DepthMap mesh_depth_filled(const FeatureSet& fs, const Intrinsics& k, InterpolationMode mode) {
  const auto mesh = cdt::triangulate(cdt::prepare_sites(fs));
  return nearest_valid_fill(interpolate_mesh_depth(mesh, k, mode).depth);
}

/// The three ablation splits on one scene with the same feature budget.
/// P+L trades budget points for up to `lines` edge segments.
inline AblationResult ablation_run(const SceneSpec& s, const AblationConfig& cfg = {}) {
  if (cfg.budget < 3 || cfg.lines < 0 || cfg.lines > cfg.budget - 3)
    throw DomainError("ablation_run: budget must leave at least 3 point features");
  const auto gt = render(s).depth;
  const int w = s.camera.width, h = s.camera.height;
  const FeatureSet pts = sample_features(s, cfg.budget, 0, cfg.noise_sigma, cfg.feature_seed);
  FeatureSet pl;
  if (cfg.lines > 0 && !edge_candidates(s).empty())
    pl.lines = sample_features(s, 0, cfg.lines, cfg.noise_sigma, cfg.feature_seed + 1).lines;
  const int nl = static_cast<int>(pl.lines.size());
  pl.points.assign(pts.points.begin(), pts.points.begin() + (cfg.budget - nl));

  AblationResult r;
  r.lines_used = nl;
  r.p = evaluate(nearest_valid_fill(sparse_raster(pts, w, h)), gt);
  r.pl = evaluate(nearest_valid_fill(sparse_raster(pl, w, h)), gt);
  r.plm = evaluate(mesh_depth_filled(pl, s.camera, cfg.mode), gt);
  return r;
}

}  // namespace sketchdepth::synth
