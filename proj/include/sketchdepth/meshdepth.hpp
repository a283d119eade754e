#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "sketchdepth/cdt.hpp"
#include "sketchdepth/core.hpp"
#include "sketchdepth/predicates.hpp"

namespace sketchdepth {

enum class InterpolationMode {
  Planar3D,      // ray/plane intersection with the back-projected facet
  BarycentricZ,  // image-space barycentric blend of vertex depths
};

/// Depth interpolant of one mesh facet.
class FacetInterpolant {
 public:
  /// Returns nullopt when the back-projected plane is (numerically) parallel
  /// to the viewing ray through the facet.
  static std::optional<FacetInterpolant> make(const cdt::Mesh& mesh, std::size_t facet, const Intrinsics& k,
                                              InterpolationMode mode) {
    FacetInterpolant f;
    f.mode_ = mode;
    f.k_ = k;
    for (int i = 0; i < 3; ++i) {
      const auto& v = mesh.vertices[mesh.facets[facet][i]];
      f.pix_[i] = v.pos;
      f.z_[i] = v.depth;
      f.pts_[i] = k.ray(v.pos.x(), v.pos.y()) * v.depth;
    }
    if (mode == InterpolationMode::Planar3D) {
      f.normal_ = (f.pts_[1] - f.pts_[0]).cross(f.pts_[2] - f.pts_[0]);
      const double nn = f.normal_.norm();
      if (!(nn > 0)) return std::nullopt;
      const Vec2 c = (f.pix_[0] + f.pix_[1] + f.pix_[2]) / 3.0;
      const Vec3 ray = k.ray(c.x(), c.y());
      if (std::abs(f.normal_.dot(ray)) / (nn * ray.norm()) < 1e-12) return std::nullopt;
      f.offset_ = f.normal_.dot(f.pts_[0]);
    } else {
      f.area_ = (f.pix_[1] - f.pix_[0]).x() * (f.pix_[2] - f.pix_[0]).y() -
                (f.pix_[1] - f.pix_[0]).y() * (f.pix_[2] - f.pix_[0]).x();
      if (f.area_ == 0) return std::nullopt;
    }
    return f;
  }

  double at(const Vec2& p) const {
    if (mode_ == InterpolationMode::Planar3D) {
      const Vec3 ray = k_.ray(p.x(), p.y());
      return offset_ / normal_.dot(ray);
    }
    auto cross = [](const Vec2& a, const Vec2& b, const Vec2& c) {
      return (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    };
    const double w0 = cross(p, pix_[1], pix_[2]) / area_;
    const double w1 = cross(pix_[0], p, pix_[2]) / area_;
    const double w2 = cross(pix_[0], pix_[1], p) / area_;
    return w0 * z_[0] + w1 * z_[1] + w2 * z_[2];
  }

 private:
  InterpolationMode mode_ = InterpolationMode::Planar3D;
  Intrinsics k_;
  Vec2 pix_[3];
  double z_[3] = {0, 0, 0};
  Vec3 pts_[3];
  Vec3 normal_ = Vec3::Zero();
  double offset_ = 0;
  double area_ = 0;
};

/// Rough mesh depth: interpolated depth over the hull plus its coverage mask.
struct RoughMeshDepth {
  DepthMap depth;
  ValidMask mask;
  cdt::Mesh mesh;
  std::vector<std::size_t> skipped_facets;
};

/// Which facet owns each pixel center (-1 outside the hull). Facets are
/// scanned in index order, so boundary pixels go to the lowest index.
inline Grid<std::int32_t> rasterize_facets(const cdt::Mesh& mesh, int width, int height) {
  Grid<std::int32_t> owner(width, height, -1);
  for (std::size_t f = 0; f < mesh.facets.size(); ++f) {
    const Vec2& a = mesh.vertices[mesh.facets[f][0]].pos;
    const Vec2& b = mesh.vertices[mesh.facets[f][1]].pos;
    const Vec2& c = mesh.vertices[mesh.facets[f][2]].pos;
    const Vec2 lo = a.cwiseMin(b).cwiseMin(c), hi = a.cwiseMax(b).cwiseMax(c);
    const int x0 = std::max(0, static_cast<int>(std::ceil(lo.x())));
    const int y0 = std::max(0, static_cast<int>(std::ceil(lo.y())));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(hi.x())));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(hi.y())));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        if (owner(x, y) >= 0) continue;
        if (predicates::in_triangle(a, b, c, Vec2(x, y))) owner(x, y) = static_cast<std::int32_t>(f);
      }
  }
  return owner;
}

inline RoughMeshDepth interpolate_mesh_depth(const cdt::Mesh& mesh, const Intrinsics& k,
                                             InterpolationMode mode = InterpolationMode::Planar3D) {
  for (const auto& v : mesh.vertices)
    if (!(v.depth > 0)) throw DomainError("interpolate_mesh_depth: vertex depth must be positive");

  std::vector<std::optional<FacetInterpolant>> interp;
  interp.reserve(mesh.facets.size());
  RoughMeshDepth out;
  for (std::size_t f = 0; f < mesh.facets.size(); ++f) {
    interp.push_back(FacetInterpolant::make(mesh, f, k, mode));
    if (!interp.back()) out.skipped_facets.push_back(f);
  }

  const Grid<std::int32_t> owner = rasterize_facets(mesh, k.width, k.height);
  std::vector<double> depth(static_cast<std::size_t>(k.width) * k.height, 0.0);
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      const std::int32_t f = owner(x, y);
      if (f < 0 || !interp[f]) continue;
      const double z = interp[f]->at(Vec2(x, y));
      if (z > 0 && std::isfinite(z)) depth[static_cast<std::size_t>(y) * k.width + x] = z;
    }
  out.depth = DepthMap(k.width, k.height, std::move(depth));
  out.mask = ValidMask::from_depth(out.depth);
  out.mesh = mesh;
  return out;
}

inline ValidMask depth_to_mask(const DepthMap& depth) { return ValidMask::from_depth(depth); }

/// Nearest-pixel splat of feature depths. Lines are sampled at
/// ceil(max(|du|, |dv|)) + 1 evenly spaced points with linear depth; where
/// samples collide the smaller depth wins.
inline DepthMap sparse_raster(const FeatureSet& features, int width, int height) {
  std::vector<double> data(static_cast<std::size_t>(width) * height, 0.0);
  auto splat = [&](const Vec2& p, double z) {
    const int x = std::clamp(static_cast<int>(std::floor(p.x() + 0.5)), 0, width - 1);
    const int y = std::clamp(static_cast<int>(std::floor(p.y() + 0.5)), 0, height - 1);
    double& d = data[static_cast<std::size_t>(y) * width + x];
    if (d == 0 || z < d) d = z;
  };
  for (const auto& p : features.points) {
    if (!(p.depth > 0)) throw DomainError("sparse_raster: point depth must be positive");
    splat(p.pixel, p.depth);
  }
  for (const auto& l : features.lines) {
    if (!(l.start_depth > 0) || !(l.end_depth > 0)) throw DomainError("sparse_raster: line depth must be positive");
    const Vec2 d = l.end - l.start;
    const int steps = std::max(1, static_cast<int>(std::ceil(std::max(std::abs(d.x()), std::abs(d.y())))));
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      splat(l.start + t * d, l.start_depth + t * (l.end_depth - l.start_depth));
    }
  }
  return DepthMap(width, height, std::move(data));
}

}  // namespace sketchdepth
