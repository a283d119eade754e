#pragma once

#include <cmath>
#include <vector>

#include "sketchdepth/core.hpp"

namespace sketchdepth {

struct LossWeights {
  double wP = 1.0, wS = 0.6, wL = 0.04;
  double w1 = 0.15, w2 = 0.95;

  void validate() const {
    for (double w : {wP, wS, wL, w1, w2})
      if (!(w >= 0) || !std::isfinite(w)) throw DomainError("loss weights must be finite and >= 0");
  }
};

struct SsimConfig {
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
  int window = 3;

  void validate() const {
    if (!(c1 > 0) || !(c2 > 0)) throw DomainError("ssim: constants must be positive");
    if (window < 3 || window % 2 == 0) throw DomainError("ssim: window must be odd and >= 3");
  }
};

struct SourceFrame {
  ImageBuffer image;
  Pose pose;  // world from camera
};

/// Target frame plus the source frames it is compared against.
struct FrameWindow {
  ImageBuffer target_image;
  DepthMap target_sparse_depth;
  Pose target_pose;  // world from camera
  std::vector<SourceFrame> sources;

  void validate() const {
    if (sources.empty()) throw DomainError("frame window: at least one source frame is required");
    for (const auto& s : sources)
      if (s.image.width() != target_image.width() || s.image.height() != target_image.height() ||
          s.image.channels() != target_image.channels())
        throw ShapeError("frame window: source and target images differ in shape");
  }

  Pose source_from_target(std::size_t i) const { return sources.at(i).pose.inverse() * target_pose; }
};

struct WarpResult {
  ImageBuffer warped;  // zero where invalid
  ValidMask valid;
};

/// Value plus gradient with respect to the dense depth map.
struct LossWithGrad {
  double value = 0;
  std::vector<double> grad;
};

struct LossBreakdown {
  double l_p = 0, l_s = 0, l_l = 0, total = 0;
};

namespace detail {

inline void check_same_size(const ImageBuffer& img, const Grid<double>& z, const char* what) {
  if (!z.same_shape(img.width(), img.height())) throw ShapeError(std::string(what) + ": image and depth differ in size");
}

/// Where each target pixel lands in the source and how that moves with depth.
struct Reprojection {
  bool valid = false;
  double u = 0, v = 0;        // source coordinates
  double du_dz = 0, dv_dz = 0;
};

inline Reprojection reproject(int x, int y, double z, const Pose& src_from_tgt, const Intrinsics& k) {
  Reprojection r;
  if (!(z > 0)) return r;
  const Vec3 ray = k.ray(x, y);
  const Vec3 m = src_from_tgt.rotation() * ray;
  const Vec3 p = m * z + src_from_tgt.translation();
  if (!(p.z() > 0)) return r;
  r.u = k.fx * p.x() / p.z() + k.cx;
  r.v = k.fy * p.y() / p.z() + k.cy;
  // Round-off of an exact border hit must not invalidate the pixel.
  constexpr double tol = 1e-9;
  if (!(r.u >= -tol && r.u <= k.width - 1 + tol && r.v >= -tol && r.v <= k.height - 1 + tol)) return r;
  r.u = std::clamp(r.u, 0.0, k.width - 1.0);
  r.v = std::clamp(r.v, 0.0, k.height - 1.0);
  r.valid = true;
  r.du_dz = k.fx * (m.x() * p.z() - p.x() * m.z()) / (p.z() * p.z());
  r.dv_dz = k.fy * (m.y() * p.z() - p.y() * m.z()) / (p.z() * p.z());
  return r;
}

/// Bilinear sample of channel c at (u, v) inside [0, W-1] x [0, H-1], with
/// its partial derivatives.
inline double bilinear(const ImageBuffer& img, int c, double u, double v, double* du = nullptr, double* dv = nullptr) {
  const int x0 = std::min(static_cast<int>(std::floor(u)), img.width() - 1);
  const int y0 = std::min(static_cast<int>(std::floor(v)), img.height() - 1);
  const int x1 = std::min(x0 + 1, img.width() - 1), y1 = std::min(y0 + 1, img.height() - 1);
  const double a = u - x0, b = v - y0;
  const double i00 = img(x0, y0, c), i10 = img(x1, y0, c), i01 = img(x0, y1, c), i11 = img(x1, y1, c);
  if (du) *du = (1 - b) * (i10 - i00) + b * (i11 - i01);
  if (dv) *dv = (1 - a) * (i01 - i00) + a * (i11 - i10);
  return (1 - a) * (1 - b) * i00 + a * (1 - b) * i10 + (1 - a) * b * i01 + a * b * i11;
}

/// Window statistics of SSIM at one center.
struct SsimTerms {
  double n = 0, mu_a = 0, mu_b = 0, var_a = 0, var_b = 0, cov = 0;
  double A = 0, B = 0, C = 0, D = 0, s = 0;
};

inline SsimTerms ssim_terms(const Grid<double>& a, const Grid<double>& b, int x, int y, const SsimConfig& cfg) {
  const int r = cfg.window / 2;
  const int x0 = std::max(0, x - r), x1 = std::min(a.width() - 1, x + r);
  const int y0 = std::max(0, y - r), y1 = std::min(a.height() - 1, y + r);
  SsimTerms t;
  t.n = static_cast<double>((x1 - x0 + 1) * (y1 - y0 + 1));
  for (int yy = y0; yy <= y1; ++yy)
    for (int xx = x0; xx <= x1; ++xx) t.mu_a += a(xx, yy), t.mu_b += b(xx, yy);
  t.mu_a /= t.n;
  t.mu_b /= t.n;
  for (int yy = y0; yy <= y1; ++yy)
    for (int xx = x0; xx <= x1; ++xx) {
      const double da = a(xx, yy) - t.mu_a, db = b(xx, yy) - t.mu_b;
      t.var_a += da * da;
      t.var_b += db * db;
      t.cov += da * db;
    }
  t.var_a /= t.n;
  t.var_b /= t.n;
  t.cov /= t.n;
  t.A = 2 * t.mu_a * t.mu_b + cfg.c1;
  t.B = 2 * t.cov + cfg.c2;
  t.C = t.mu_a * t.mu_a + t.mu_b * t.mu_b + cfg.c1;
  t.D = t.var_a + t.var_b + cfg.c2;
  t.s = t.A * t.B / (t.C * t.D);
  return t;
}

inline Grid<double> ssim_grid(const Grid<double>& a, const Grid<double>& b, const SsimConfig& cfg) {
  Grid<double> out(a.width(), a.height());
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) out(x, y) = ssim_terms(a, b, x, y, cfg).s;
  return out;
}

}  // namespace detail

/// Inverse warp of `src` into the target view: each target pixel with valid
/// depth is back-projected, moved into the source camera and bilinearly
/// sampled. Invalid where the depth is 0, the point is behind the source
/// camera, or it lands outside [0, W-1] x [0, H-1].
inline WarpResult warp_image(const ImageBuffer& src, const DepthMap& depth, const Pose& src_from_target,
                             const Intrinsics& k) {
  if (!depth.same_shape(src.width(), src.height()) || !depth.same_shape(k.width, k.height))
    throw ShapeError("warp_image: image, depth and intrinsics differ in size");
  const int w = src.width(), h = src.height(), ch = src.channels();
  std::vector<double> out(static_cast<std::size_t>(w) * h * ch, 0.0);
  ValidMask valid(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto r = detail::reproject(x, y, depth(x, y), src_from_target, k);
      if (!r.valid) continue;
      valid(x, y) = 1;
      for (int c = 0; c < ch; ++c)
        out[(static_cast<std::size_t>(y) * w + x) * ch + c] = std::clamp(detail::bilinear(src, c, r.u, r.v), 0.0, 1.0);
    }
  return {ImageBuffer(w, h, ch, std::move(out)), std::move(valid)};
}

/// Per-pixel SSIM of the channel-mean intensities over a box window clipped
/// at the image border.
inline Grid<double> ssim_map(const ImageBuffer& a, const ImageBuffer& b, const SsimConfig& cfg = {}) {
  cfg.validate();
  if (a.width() != b.width() || a.height() != b.height()) throw ShapeError("ssim_map: images differ in size");
  return detail::ssim_grid(a.intensity(), b.intensity(), cfg);
}

/// Photometric loss and its gradient with respect to zDense. Averages
/// w1 * L1 + w2 * (1 - SSIM) over every (source, warp-valid pixel) pair.
inline LossWithGrad photometric_loss_grad(const FrameWindow& frames, const DepthMap& z, const Intrinsics& k,
                                          const LossWeights& weights = {}, const SsimConfig& cfg = {}) {
  frames.validate();
  weights.validate();
  cfg.validate();
  const ImageBuffer& tgt = frames.target_image;
  if (!z.same_shape(tgt.width(), tgt.height())) throw ShapeError("photometric_loss: depth and image differ in size");
  const int w = tgt.width(), h = tgt.height(), ch = tgt.channels();
  const std::size_t npx = static_cast<std::size_t>(w) * h;
  const Grid<double> tgt_int = tgt.intensity();

  struct PerSource {
    std::vector<detail::Reprojection> rep;
    ImageBuffer warped;
    ValidMask valid;
  };
  std::vector<PerSource> per;
  std::size_t total_valid = 0;
  for (std::size_t s = 0; s < frames.sources.size(); ++s) {
    const Pose pose = frames.source_from_target(s);
    auto wr = warp_image(frames.sources[s].image, z, pose, k);
    std::vector<detail::Reprojection> rep(npx);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) rep[static_cast<std::size_t>(y) * w + x] = detail::reproject(x, y, z(x, y), pose, k);
    total_valid += wr.valid.count();
    per.push_back({std::move(rep), std::move(wr.warped), std::move(wr.valid)});
  }
  if (total_valid == 0) throw UndefinedLossError("photometric_loss: no warp-valid pixel");
  const double inv_n = 1.0 / static_cast<double>(total_valid);

  LossWithGrad out;
  out.grad.assign(npx, 0.0);
  for (std::size_t s = 0; s < per.size(); ++s) {
    const auto& ps = per[s];
    const Grid<double> warped_int = ps.warped.intensity();
    // dL/d(warped intensity) from SSIM, dL/d(warped channel) from L1.
    std::vector<double> g_int(npx, 0.0);
    const int r = cfg.window / 2;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!ps.valid[i]) continue;
        double l1 = 0;
        for (int c = 0; c < ch; ++c) l1 += std::abs(tgt(x, y, c) - ps.warped(x, y, c));
        l1 /= ch;
        const auto t = detail::ssim_terms(tgt_int, warped_int, x, y, cfg);
        out.value += (weights.w1 * l1 + weights.w2 * (1 - t.s)) * inv_n;
        // dS/db_p = alpha + beta * a_p + gamma * b_p for p in the window.
        const double cd = t.C * t.D;
        const double alpha =
            (2 * t.mu_a * t.B - 2 * t.A * t.mu_a - t.s * (2 * t.mu_b * t.D - 2 * t.C * t.mu_b)) / (t.n * cd);
        const double beta = 2 * t.A / (t.n * cd);
        const double gamma = -2 * t.s * t.C / (t.n * cd);
        const double scale = -weights.w2 * inv_n;
        for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy)
          for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx)
            g_int[static_cast<std::size_t>(yy) * w + xx] +=
                scale * (alpha + beta * tgt_int(xx, yy) + gamma * warped_int(xx, yy));
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!ps.valid[i]) continue;
        const auto& rp = ps.rep[i];
        double g = 0;
        for (int c = 0; c < ch; ++c) {
          const double diff = tgt(x, y, c) - ps.warped(x, y, c);
          const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
          const double g_warped = -weights.w1 * inv_n * sgn / ch + g_int[i] / ch;
          double du = 0, dv = 0;
          detail::bilinear(frames.sources[s].image, c, rp.u, rp.v, &du, &dv);
          g += g_warped * (du * rp.du_dz + dv * rp.dv_dz);
        }
        out.grad[i] += g;
      }
  }
  return out;
}

inline double photometric_loss(const FrameWindow& frames, const DepthMap& z, const Intrinsics& k,
                               const LossWeights& weights = {}, const SsimConfig& cfg = {}) {
  return photometric_loss_grad(frames, z, k, weights, cfg).value;
}

/// Mean |zDense - zFeatures| over pixels where zFeatures > 0.
inline LossWithGrad sparse_consistency_loss_grad(const Grid<double>& z, const DepthMap& zf) {
  if (!z.same_shape(zf.width(), zf.height())) throw ShapeError("sparse_consistency_loss: maps differ in size");
  const std::size_t n = zf.valid_count();
  if (n == 0) throw UndefinedLossError("sparse_consistency_loss: no valid feature depth");
  LossWithGrad out;
  out.grad.assign(z.size(), 0.0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!(zf[i] > 0)) continue;
    const double d = z[i] - zf[i];
    out.value += std::abs(d);
    out.grad[i] = (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / n;
  }
  out.value /= n;
  return out;
}

inline double sparse_consistency_loss(const Grid<double>& z, const DepthMap& zf) {
  return sparse_consistency_loss_grad(z, zf).value;
}

/// Edge-aware smoothness: forward differences, last column/row terms
/// dropped, sum divided by W*H.
inline LossWithGrad smoothness_loss_grad(const Grid<double>& z, const ImageBuffer& image) {
  if (!z.same_shape(image.width(), image.height())) throw ShapeError("smoothness_loss: depth and image differ in size");
  const int w = z.width(), h = z.height();
  const Grid<double> in = image.intensity();
  const double inv = 1.0 / (static_cast<double>(w) * h);
  LossWithGrad out;
  out.grad.assign(z.size(), 0.0);
  auto term = [&](int x0, int y0, int x1, int y1) {
    const double wgt = std::exp(-std::abs(in(x1, y1) - in(x0, y0)));
    const double d = z(x1, y1) - z(x0, y0);
    out.value += wgt * std::abs(d) * inv;
    const double g = wgt * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) * inv;
    out.grad[static_cast<std::size_t>(y1) * w + x1] += g;
    out.grad[static_cast<std::size_t>(y0) * w + x0] -= g;
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) term(x, y, x + 1, y);
      if (y + 1 < h) term(x, y, x, y + 1);
    }
  return out;
}

inline double smoothness_loss(const Grid<double>& z, const ImageBuffer& image) {
  return smoothness_loss_grad(z, image).value;
}

inline double total_loss(double l_p, double l_s, double l_l, const LossWeights& weights = {}) {
  weights.validate();
  for (double l : {l_p, l_s, l_l})
    if (!std::isfinite(l)) throw DomainError("total_loss: components must be finite");
  return weights.wP * l_p + weights.wS * l_s + weights.wL * l_l;
}

/// All three terms for one target frame and their weighted sum.
inline LossBreakdown evaluate_losses(const FrameWindow& frames, const DepthMap& z, const Intrinsics& k,
                                     const LossWeights& weights = {}, const SsimConfig& cfg = {}) {
  LossBreakdown b;
  b.l_p = photometric_loss(frames, z, k, weights, cfg);
  b.l_s = sparse_consistency_loss(z, frames.target_sparse_depth);
  b.l_l = smoothness_loss(z, frames.target_image);
  b.total = total_loss(b.l_p, b.l_s, b.l_l, weights);
  return b;
}

}  // namespace sketchdepth
