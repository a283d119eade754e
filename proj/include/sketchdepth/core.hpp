#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sketchdepth/error.hpp"

namespace sketchdepth {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole camera. Pixel centers sit at integer (u, v), origin top-left.
struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  Intrinsics() = default;
  Intrinsics(double fx_, double fy_, double cx_, double cy_, int width_, int height_)
      : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(width_), height(height_) {
    validate();
  }

  void validate() const {
    if (!(fx > 0) || !(fy > 0) || !std::isfinite(fx) || !std::isfinite(fy))
      throw DomainError("intrinsics: focal lengths must be positive and finite");
    if (width <= 0 || height <= 0) throw DomainError("intrinsics: image size must be positive");
    if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
      throw DomainError("intrinsics: principal point outside the image");
  }

  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }

  bool contains(const Vec2& px) const {
    return px.x() >= 0 && px.x() < width && px.y() >= 0 && px.y() < height;
  }

  /// Un-normalized viewing ray K^-1 [u, v, 1]; its z component is 1.
  Vec3 ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }

  bool operator==(const Intrinsics&) const = default;
};

/// Row-major 2D array shared by the image, depth and mask containers.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(checked_size(width, height, 1), fill) {}
  Grid(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != checked_size(width, height, 1))
      throw ShapeError("grid: data length does not match width*height");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(int w, int h) const { return w == width_ && h == height_; }

  const T& operator()(int x, int y) const { return data_[index(x, y)]; }
  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator[](std::size_t i) { return data_[i]; }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }
  const std::vector<T>& vector() const { return data_; }

  bool operator==(const Grid&) const = default;

 protected:
  static std::size_t checked_size(int w, int h, int c) {
    if (w < 0 || h < 0 || c < 0) throw ShapeError("grid: negative dimension");
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c);
  }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0, height_ = 0;
  std::vector<T> data_;
};

/// Dense depth in meters. 0 marks an invalid pixel; NaN is never stored.
class DepthMap : public Grid<double> {
 public:
  DepthMap() = default;
  DepthMap(int width, int height, double fill = 0.0) : Grid(width, height, fill) { validate(); }
  DepthMap(int width, int height, std::vector<double> data) : Grid(width, height, std::move(data)) {
    validate();
  }

  bool valid(int x, int y) const { return (*this)(x, y) > 0; }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (double d : data_) n += d > 0 ? 1 : 0;
    return n;
  }

 private:
  void validate() const {
    for (double d : data_)
      if (!(d >= 0) || !std::isfinite(d)) throw DomainError("depth map: values must be finite and >= 0");
  }
};

/// Boolean pixel set stored as bytes (0/1).
class ValidMask : public Grid<std::uint8_t> {
 public:
  ValidMask() = default;
  ValidMask(int width, int height, bool fill = false) : Grid(width, height, fill ? 1 : 0) {}
  ValidMask(int width, int height, std::vector<std::uint8_t> data) : Grid(width, height, std::move(data)) {
    for (auto& v : data_) v = v ? 1 : 0;
  }

  static ValidMask from_depth(const DepthMap& depth) {
    ValidMask m(depth.width(), depth.height());
    for (std::size_t i = 0; i < depth.size(); ++i) m.data_[i] = depth[i] > 0 ? 1 : 0;
    return m;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data_) n += v;
    return n;
  }
};

/// Row-major, channel-interleaved intensities in [0, 1].
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, double fill = 0.0)
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0) * std::max(channels, 0), fill) {
    validate();
  }
  ImageBuffer(int width, int height, int channels, std::vector<double> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    validate();
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }

  double operator()(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }
  std::span<const double> data() const { return data_; }

  /// Per-pixel channel mean, used wherever a single intensity is needed.
  Grid<double> intensity() const {
    Grid<double> g(width_, height_);
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x) {
        double s = 0;
        for (int c = 0; c < channels_; ++c) s += (*this)(x, y, c);
        g(x, y) = s / channels_;
      }
    return g;
  }

  bool operator==(const ImageBuffer&) const = default;

 private:
  void validate() const {
    if (width_ <= 0 || height_ <= 0) throw ShapeError("image: size must be positive");
    if (channels_ != 1 && channels_ != 3) throw ShapeError("image: channels must be 1 or 3");
    if (data_.size() != static_cast<std::size_t>(width_) * height_ * channels_)
      throw ShapeError("image: data length does not match width*height*channels");
    for (double v : data_)
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("image: intensities must be finite and in [0, 1]");
  }
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0, height_ = 0, channels_ = 0;
  std::vector<double> data_;
};

struct PointFeature {
  Vec2 pixel;
  double depth = 0;
};

struct LineFeature {
  Vec2 start;
  double start_depth = 0;
  Vec2 end;
  double end_depth = 0;
};

/// Point features with depth and line segments with endpoint depths.
struct FeatureSet {
  std::vector<PointFeature> points;
  std::vector<LineFeature> lines;

  std::size_t size() const { return points.size() + lines.size(); }

  /// Checks bounds and depth positivity against an image of the given size.
  void validate(int width, int height) const {
    auto in_bounds = [&](const Vec2& p) {
      return std::isfinite(p.x()) && std::isfinite(p.y()) && p.x() >= 0 && p.x() < width && p.y() >= 0 &&
             p.y() < height;
    };
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!in_bounds(points[i].pixel)) throw DomainError("point " + std::to_string(i) + " outside the image");
      if (!(points[i].depth > 0) || !std::isfinite(points[i].depth))
        throw DomainError("point " + std::to_string(i) + " has non-positive depth");
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto& l = lines[i];
      if (!in_bounds(l.start) || !in_bounds(l.end))
        throw DomainError("line " + std::to_string(i) + " endpoint outside the image");
      if (!(l.start_depth > 0) || !(l.end_depth > 0) || !std::isfinite(l.start_depth) || !std::isfinite(l.end_depth))
        throw DomainError("line " + std::to_string(i) + " has non-positive depth");
      if (l.start == l.end) throw DomainError("line " + std::to_string(i) + " has coincident endpoints");
    }
  }
};

/// Rigid transform p -> R p + t.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Mat3& rotation, const Vec3& translation) : rotation_(rotation), translation_(translation) {
    if (!rotation_.allFinite() || !translation_.allFinite()) throw DomainError("pose: non-finite entries");
    if ((rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
      throw DomainError("pose: rotation is not orthonormal");
    if (std::abs(rotation_.determinant() - 1.0) > 1e-9) throw DomainError("pose: rotation has det != +1");
  }

  static Pose identity() { return {}; }
  static Pose translation(const Vec3& t) { return {Mat3::Identity(), t}; }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }

  Pose inverse() const {
    Pose inv;
    inv.rotation_ = rotation_.transpose();
    inv.translation_ = -(inv.rotation_ * translation_);
    return inv;
  }

  /// (a * b).apply(p) == a.apply(b.apply(p))
  friend Pose operator*(const Pose& a, const Pose& b) {
    Pose out;
    out.rotation_ = a.rotation_ * b.rotation_;
    out.translation_ = a.rotation_ * b.translation_ + a.translation_;
    return out;
  }

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

struct Projection {
  Vec2 pixel;
  double depth = 0;
};

inline Vec3 back_project(const Vec2& pixel, double depth, const Intrinsics& k) {
  if (!(depth > 0) || !std::isfinite(depth)) throw DomainError("back_project: depth must be positive");
  if (!k.contains(pixel)) throw DomainError("back_project: pixel outside the image");
  return k.ray(pixel.x(), pixel.y()) * depth;
}

inline Projection project(const Vec3& point, const Intrinsics& k) {
  if (!(point.z() > 0)) throw DomainError("project: point is behind the camera");
  return {{k.fx * point.x() / point.z() + k.cx, k.fy * point.y() / point.z() + k.cy}, point.z()};
}

inline Vec3 transform(const Vec3& point, const Pose& pose) { return pose.apply(point); }

}  // namespace sketchdepth
