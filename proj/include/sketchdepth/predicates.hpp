#pragma once

#include <cmath>
#include <vector>

#include "sketchdepth/core.hpp"

/// Adaptive-exact orientation and in-circle predicates.
///
/// A floating-point evaluation is accepted when its magnitude exceeds a
/// forward error bound; otherwise the determinant is re-evaluated exactly with
/// floating-point expansion arithmetic (sums of non-overlapping doubles).
namespace sketchdepth::predicates {

namespace detail {

inline constexpr double kEpsilon = 0x1p-53;
inline constexpr double kOrientBound = (3.0 + 16.0 * kEpsilon) * kEpsilon;
inline constexpr double kInCircleBound = (10.0 + 96.0 * kEpsilon) * kEpsilon;

inline void two_sum(double a, double b, double& x, double& y) {
  x = a + b;
  const double bv = x - a;
  const double av = x - bv;
  y = (a - av) + (b - bv);
}

inline void fast_two_sum(double a, double b, double& x, double& y) {
  x = a + b;
  y = b - (x - a);
}

inline void two_product(double a, double b, double& x, double& y) {
  x = a * b;
  y = std::fma(a, b, -x);
}

/// Non-overlapping expansion, components ordered by increasing magnitude,
/// zeros eliminated. The represented value is the exact sum of components.
class Expansion {
 public:
  Expansion() = default;
  explicit Expansion(double v) {
    if (v != 0) c_.push_back(v);
  }

  static Expansion difference(double a, double b) {
    double x, y;
    two_sum(a, -b, x, y);
    Expansion e;
    if (y != 0) e.c_.push_back(y);
    if (x != 0) e.c_.push_back(x);
    return e;
  }

  int sign() const {
    if (c_.empty()) return 0;
    return c_.back() > 0 ? 1 : -1;
  }

  Expansion operator-() const {
    Expansion e = *this;
    for (double& v : e.c_) v = -v;
    return e;
  }

  friend Expansion operator+(const Expansion& e, const Expansion& f) {
    Expansion h = e;
    for (double b : f.c_) h = h.grow(b);
    return h;
  }
  friend Expansion operator-(const Expansion& e, const Expansion& f) { return e + (-f); }

  friend Expansion operator*(const Expansion& e, const Expansion& f) {
    Expansion h;
    for (double b : f.c_) h = h + e.scale(b);
    return h;
  }

 private:
  Expansion grow(double b) const {
    Expansion h;
    double q = b;
    for (double ei : c_) {
      double s, t;
      two_sum(q, ei, s, t);
      if (t != 0) h.c_.push_back(t);
      q = s;
    }
    if (q != 0) h.c_.push_back(q);
    return h;
  }

  Expansion scale(double b) const {
    Expansion h;
    if (c_.empty() || b == 0) return h;
    double q, hh;
    two_product(c_[0], b, q, hh);
    if (hh != 0) h.c_.push_back(hh);
    for (std::size_t i = 1; i < c_.size(); ++i) {
      double p1, p0, sum;
      two_product(c_[i], b, p1, p0);
      two_sum(q, p0, sum, hh);
      if (hh != 0) h.c_.push_back(hh);
      fast_two_sum(p1, sum, q, hh);
      if (hh != 0) h.c_.push_back(hh);
    }
    if (q != 0) h.c_.push_back(q);
    return h;
  }

  std::vector<double> c_;
};

inline int orient2d_exact(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Expansion acx = Expansion::difference(a.x(), c.x());
  const Expansion acy = Expansion::difference(a.y(), c.y());
  const Expansion bcx = Expansion::difference(b.x(), c.x());
  const Expansion bcy = Expansion::difference(b.y(), c.y());
  return (acx * bcy - acy * bcx).sign();
}

inline int incircle_exact(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const Expansion adx = Expansion::difference(a.x(), d.x());
  const Expansion ady = Expansion::difference(a.y(), d.y());
  const Expansion bdx = Expansion::difference(b.x(), d.x());
  const Expansion bdy = Expansion::difference(b.y(), d.y());
  const Expansion cdx = Expansion::difference(c.x(), d.x());
  const Expansion cdy = Expansion::difference(c.y(), d.y());
  const Expansion alift = adx * adx + ady * ady;
  const Expansion blift = bdx * bdx + bdy * bdy;
  const Expansion clift = cdx * cdx + cdy * cdy;
  const Expansion det = alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) +
                        clift * (adx * bdy - bdx * ady);
  return det.sign();
}

}  // namespace detail

/// +1 if c lies left of the directed line a->b (a, b, c counter-clockwise),
/// -1 if right, 0 if exactly collinear.
inline int orient2d(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double detleft = (a.x() - c.x()) * (b.y() - c.y());
  const double detright = (a.y() - c.y()) * (b.x() - c.x());
  const double det = detleft - detright;
  const double bound = detail::kOrientBound * (std::abs(detleft) + std::abs(detright));
  if (det > bound) return 1;
  if (-det > bound) return -1;
  return detail::orient2d_exact(a, b, c);
}

/// For counter-clockwise a, b, c: +1 if d lies strictly inside their
/// circumcircle, -1 if strictly outside, 0 if cocircular.
inline int incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y();

  const double bdxcdy = bdx * cdy, cdxbdy = cdx * bdy;
  const double cdxady = cdx * ady, adxcdy = adx * cdy;
  const double adxbdy = adx * bdy, bdxady = bdx * ady;
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;

  const double det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady);
  const double permanent = (std::abs(bdxcdy) + std::abs(cdxbdy)) * alift +
                           (std::abs(cdxady) + std::abs(adxcdy)) * blift +
                           (std::abs(adxbdy) + std::abs(bdxady)) * clift;
  const double bound = detail::kInCircleBound * permanent;
  if (det > bound) return 1;
  if (-det > bound) return -1;
  return detail::incircle_exact(a, b, c, d);
}

/// Closed-triangle containment for a counter-clockwise triangle.
inline bool in_triangle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p) {
  return orient2d(a, b, p) >= 0 && orient2d(b, c, p) >= 0 && orient2d(c, a, p) >= 0;
}

/// True if p is collinear with a-b and strictly between the endpoints.
inline bool strictly_inside_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
  if (orient2d(a, b, p) != 0) return false;
  if (a.x() != b.x())
    return (p.x() > std::min(a.x(), b.x())) && (p.x() < std::max(a.x(), b.x()));
  return (p.y() > std::min(a.y(), b.y())) && (p.y() < std::max(a.y(), b.y()));
}

}  // namespace sketchdepth::predicates
