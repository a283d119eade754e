#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sketchdepth/core.hpp"
#include "sketchdepth/fill.hpp"
#include "sketchdepth/losses.hpp"

namespace sketchdepth::mdr {

/// Channel-major feature map.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_, double fill = 0.0)
      : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, fill) {}

  double& at(int ch, int y, int x) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  double at(int ch, int y, int x) const { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

/// The seven 3x3 convolutions of the network, in parameter declaration order.
enum Layer : int { ImgConv1, ImgConv2, DepConv1, DepConv2, Fuse1, Fuse2, Head, kLayerCount };

struct ConvShape {
  const char* name;
  int out, in;
};

inline constexpr std::array<ConvShape, kLayerCount> kConvShapes{{
    {"img_conv1", 4, 4},   // rgb + mask
    {"img_conv2", 8, 8},   // after the first parallel pool
    {"dep_conv1", 4, 2},   // filled depth + mask
    {"dep_conv2", 8, 8},
    {"fuse1", 16, 32},     // quarter resolution: 16 + 16 pooled channels
    {"fuse2", 8, 32},      // half resolution: 16 upsampled + 8 + 8 skip channels
    {"head", 1, 8},
}};

struct TensorInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// All learnable tensors, stored as one flat vector in declaration order
/// (w then b for every layer).
class MdrParams {
 public:
  static const std::vector<TensorInfo>& layout() {
    static const std::vector<TensorInfo> infos = [] {
      std::vector<TensorInfo> out;
      std::size_t off = 0;
      for (const auto& s : kConvShapes) {
        const std::size_t nw = static_cast<std::size_t>(s.out) * s.in * 9;
        out.push_back({std::string(s.name) + ".w", {s.out, s.in, 3, 3}, off, nw});
        off += nw;
        out.push_back({std::string(s.name) + ".b", {s.out}, off, static_cast<std::size_t>(s.out)});
        off += s.out;
      }
      return out;
    }();
    return infos;
  }

  static std::size_t flat_size() {
    const auto& l = layout();
    return l.back().offset + l.back().size;
  }

  MdrParams() : flat_(flat_size(), 0.0) {}

  static MdrParams zeros() { return {}; }

  /// Uniform in [-s, s] with s = 1/sqrt(fan_in), biases included.
  static MdrParams random(std::uint64_t seed) {
    MdrParams p;
    std::mt19937_64 rng(seed);
    for (int l = 0; l < kLayerCount; ++l) {
      const double s = 1.0 / std::sqrt(kConvShapes[l].in * 9.0);
      std::uniform_real_distribution<double> dist(-s, s);
      for (int t = 0; t < 2; ++t) {
        const auto& info = layout()[2 * l + t];
        for (std::size_t i = 0; i < info.size; ++i) p.flat_[info.offset + i] = dist(rng);
      }
    }
    return p;
  }

  static MdrParams from_flat(std::vector<double> flat) {
    if (flat.size() != flat_size())
      throw ParameterError("mdr params: expected " + std::to_string(flat_size()) + " values, got " +
                           std::to_string(flat.size()));
    MdrParams p;
    p.flat_ = std::move(flat);
    return p;
  }

  const std::vector<double>& flat() const { return flat_; }
  std::vector<double>& flat() { return flat_; }

  std::span<const double> tensor(std::size_t index) const {
    const auto& info = layout().at(index);
    return std::span<const double>(flat_).subspan(info.offset, info.size);
  }
  const double* weights(int layer) const { return flat_.data() + layout()[2 * layer].offset; }
  const double* bias(int layer) const { return flat_.data() + layout()[2 * layer + 1].offset; }

  void validate() const {
    for (double v : flat_)
      if (!std::isfinite(v)) throw ParameterError("mdr params: non-finite value");
  }

  bool operator==(const MdrParams&) const = default;

 private:
  std::vector<double> flat_;
};

/// Everything the backward pass needs from one forward call.
struct MdrActivations {
  std::vector<double> params_snapshot;
  int width = 0, height = 0;
  std::vector<double> z_fill;
  Tensor img_in, dep_in;
  // Pre-activations (conv outputs), post-ELU maps, pooled maps and pool sources.
  Tensor img_a1, img_e1, img_p1, img_a2, img_e2, img_p2;
  Tensor dep_a1, dep_e1, dep_p1, dep_a2, dep_e2, dep_p2;
  std::vector<std::uint32_t> img_arg1, img_arg2, dep_arg1, dep_arg2;
  Tensor cat1, fuse1_a, fuse1_e, up1;
  Tensor cat2, fuse2_a, fuse2_e, up2;
  Tensor head;  // head output before the residual and softplus
};

struct MdrOutput {
  DepthMap z_refined;
  MdrActivations acts;
};

namespace detail {

inline Tensor conv3x3(const Tensor& x, const double* w, const double* b, int out) {
  Tensor y(out, x.h, x.w);
  for (int o = 0; o < out; ++o) {
    double* yo = &y.v[static_cast<std::size_t>(o) * x.h * x.w];
    for (std::size_t i = 0; i < static_cast<std::size_t>(x.h) * x.w; ++i) yo[i] = b[o];
    for (int ci = 0; ci < x.c; ++ci)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const double wk = w[((static_cast<std::size_t>(o) * x.c + ci) * 3 + ky) * 3 + kx];
          const int dy = ky - 1, dx = kx - 1;
          for (int yy = std::max(0, -dy); yy < std::min(x.h, x.h - dy); ++yy) {
            const double* xr = &x.v[(static_cast<std::size_t>(ci) * x.h + yy + dy) * x.w];
            double* yr = yo + static_cast<std::size_t>(yy) * x.w;
            for (int xx = std::max(0, -dx); xx < std::min(x.w, x.w - dx); ++xx) yr[xx] += wk * xr[xx + dx];
          }
        }
  }
  return y;
}

/// Accumulates dL/dw and dL/db; returns dL/dx when `want_dx`.
inline Tensor conv3x3_backward(const Tensor& x, const double* w, const Tensor& gy, double* gw, double* gb,
                               bool want_dx) {
  Tensor gx;
  if (want_dx) gx = Tensor(x.c, x.h, x.w);
  for (int o = 0; o < gy.c; ++o) {
    const double* go = &gy.v[static_cast<std::size_t>(o) * x.h * x.w];
    double sb = 0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(x.h) * x.w; ++i) sb += go[i];
    gb[o] += sb;
    for (int ci = 0; ci < x.c; ++ci)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const std::size_t wi = ((static_cast<std::size_t>(o) * x.c + ci) * 3 + ky) * 3 + kx;
          const int dy = ky - 1, dx = kx - 1;
          double sw = 0;
          for (int yy = std::max(0, -dy); yy < std::min(x.h, x.h - dy); ++yy) {
            const double* xr = &x.v[(static_cast<std::size_t>(ci) * x.h + yy + dy) * x.w];
            const double* gr = go + static_cast<std::size_t>(yy) * x.w;
            double* gxr = want_dx ? &gx.v[(static_cast<std::size_t>(ci) * x.h + yy + dy) * x.w] : nullptr;
            for (int xx = std::max(0, -dx); xx < std::min(x.w, x.w - dx); ++xx) {
              sw += gr[xx] * xr[xx + dx];
              if (gxr) gxr[xx + dx] += w[wi] * gr[xx];
            }
          }
          gw[wi] += sw;
        }
  }
  return gx;
}

inline Tensor elu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.v) v = v > 0 ? v : std::expm1(v);
  return y;
}

inline Tensor elu_backward(const Tensor& pre, const Tensor& gy) {
  Tensor gx = gy;
  for (std::size_t i = 0; i < gx.v.size(); ++i) gx.v[i] *= pre.v[i] > 0 ? 1.0 : std::exp(pre.v[i]);
  return gx;
}

}  // namespace detail

/// 2x2 stride-2 max and min pooling; output channel 2c is the max of input
/// channel c, 2c+1 its min. `arg` receives the source index of each output
/// (first in scan order on ties).
inline Tensor parallel_pool(const Tensor& x, std::vector<std::uint32_t>* arg = nullptr) {
  if (x.h % 2 != 0 || x.w % 2 != 0) throw ShapeError("parallel_pool: spatial dims must be even");
  Tensor y(2 * x.c, x.h / 2, x.w / 2);
  if (arg) arg->assign(y.v.size(), 0);
  for (int c = 0; c < x.c; ++c)
    for (int yy = 0; yy < y.h; ++yy)
      for (int xx = 0; xx < y.w; ++xx) {
        std::size_t imax = 0, imin = 0;
        double vmax = -INFINITY, vmin = INFINITY;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t i = (static_cast<std::size_t>(c) * x.h + 2 * yy + dy) * x.w + 2 * xx + dx;
            if (x.v[i] > vmax) vmax = x.v[i], imax = i;
            if (x.v[i] < vmin) vmin = x.v[i], imin = i;
          }
        y.at(2 * c, yy, xx) = vmax;
        y.at(2 * c + 1, yy, xx) = vmin;
        if (arg) {
          (*arg)[(static_cast<std::size_t>(2 * c) * y.h + yy) * y.w + xx] = static_cast<std::uint32_t>(imax);
          (*arg)[(static_cast<std::size_t>(2 * c + 1) * y.h + yy) * y.w + xx] = static_cast<std::uint32_t>(imin);
        }
      }
  return y;
}

inline Tensor parallel_pool_backward(const Tensor& x_shape, const std::vector<std::uint32_t>& arg, const Tensor& gy) {
  Tensor gx(x_shape.c, x_shape.h, x_shape.w);
  for (std::size_t i = 0; i < gy.v.size(); ++i) gx.v[arg[i]] += gy.v[i];
  return gx;
}

namespace detail {

/// Source taps of 2x bilinear upsampling with half-pixel centers, clamped
/// at the border.
struct UpTap {
  int i0, i1;
  double a;
};

inline std::vector<UpTap> up_taps(int n_in) {
  std::vector<UpTap> taps(2 * n_in);
  for (int o = 0; o < 2 * n_in; ++o) {
    const double s = std::clamp((o + 0.5) / 2.0 - 0.5, 0.0, n_in - 1.0);
    const int i0 = std::min(static_cast<int>(std::floor(s)), n_in - 1);
    taps[o] = {i0, std::min(i0 + 1, n_in - 1), s - i0};
  }
  return taps;
}

inline Tensor upsample2(const Tensor& x) {
  Tensor y(x.c, 2 * x.h, 2 * x.w);
  const auto ty = up_taps(x.h), tx = up_taps(x.w);
  for (int c = 0; c < x.c; ++c)
    for (int yy = 0; yy < y.h; ++yy)
      for (int xx = 0; xx < y.w; ++xx) {
        const auto& [y0, y1, b] = ty[yy];
        const auto& [x0, x1, a] = tx[xx];
        y.at(c, yy, xx) = (1 - b) * ((1 - a) * x.at(c, y0, x0) + a * x.at(c, y0, x1)) +
                          b * ((1 - a) * x.at(c, y1, x0) + a * x.at(c, y1, x1));
      }
  return y;
}

inline Tensor upsample2_backward(const Tensor& x_shape, const Tensor& gy) {
  Tensor gx(x_shape.c, x_shape.h, x_shape.w);
  const auto ty = up_taps(x_shape.h), tx = up_taps(x_shape.w);
  for (int c = 0; c < gy.c; ++c)
    for (int yy = 0; yy < gy.h; ++yy)
      for (int xx = 0; xx < gy.w; ++xx) {
        const auto& [y0, y1, b] = ty[yy];
        const auto& [x0, x1, a] = tx[xx];
        const double g = gy.at(c, yy, xx);
        gx.at(c, y0, x0) += (1 - b) * (1 - a) * g;
        gx.at(c, y0, x1) += (1 - b) * a * g;
        gx.at(c, y1, x0) += b * (1 - a) * g;
        gx.at(c, y1, x1) += b * a * g;
      }
  return gx;
}

inline Tensor concat(std::initializer_list<const Tensor*> parts) {
  const Tensor& first = **parts.begin();
  int c = 0;
  for (const Tensor* p : parts) c += p->c;
  Tensor y(c, first.h, first.w);
  std::size_t off = 0;
  for (const Tensor* p : parts) {
    std::copy(p->v.begin(), p->v.end(), y.v.begin() + static_cast<std::ptrdiff_t>(off));
    off += p->v.size();
  }
  return y;
}

inline Tensor slice_channels(const Tensor& x, int c0, int count) {
  Tensor y(count, x.h, x.w);
  const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
  std::copy(x.v.begin() + static_cast<std::ptrdiff_t>(c0 * plane),
            x.v.begin() + static_cast<std::ptrdiff_t>((c0 + count) * plane), y.v.begin());
  return y;
}

inline void add_into(Tensor& a, const Tensor& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace detail

/// Forward pass. zRefined = softplus(head + nearest-valid-filled zMesh).
inline MdrOutput mdr_forward(const ImageBuffer& image, const DepthMap& z_mesh, const ValidMask& mask,
                             const MdrParams& params) {
  const int w = image.width(), h = image.height();
  if (!z_mesh.same_shape(w, h) || !mask.same_shape(w, h))
    throw ShapeError("mdr_forward: image, depth and mask differ in size");
  if (w % 4 != 0 || h % 4 != 0) throw ShapeError("mdr_forward: width and height must be divisible by 4");
  params.validate();

  MdrOutput out;
  MdrActivations& a = out.acts;
  a.params_snapshot = params.flat();
  a.width = w;
  a.height = h;
  a.z_fill = nearest_valid_fill(z_mesh).vector();

  a.img_in = Tensor(4, h, w);
  a.dep_in = Tensor(2, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) a.img_in.at(c, y, x) = image(x, y, image.channels() == 3 ? c : 0);
      a.img_in.at(3, y, x) = mask(x, y) ? 1.0 : 0.0;
      a.dep_in.at(0, y, x) = a.z_fill[static_cast<std::size_t>(y) * w + x];
      a.dep_in.at(1, y, x) = mask(x, y) ? 1.0 : 0.0;
    }

  using detail::conv3x3;
  using detail::elu;
  const auto& P = params;
  a.img_a1 = conv3x3(a.img_in, P.weights(ImgConv1), P.bias(ImgConv1), kConvShapes[ImgConv1].out);
  a.img_e1 = elu(a.img_a1);
  a.img_p1 = parallel_pool(a.img_e1, &a.img_arg1);
  a.img_a2 = conv3x3(a.img_p1, P.weights(ImgConv2), P.bias(ImgConv2), kConvShapes[ImgConv2].out);
  a.img_e2 = elu(a.img_a2);
  a.img_p2 = parallel_pool(a.img_e2, &a.img_arg2);

  a.dep_a1 = conv3x3(a.dep_in, P.weights(DepConv1), P.bias(DepConv1), kConvShapes[DepConv1].out);
  a.dep_e1 = elu(a.dep_a1);
  a.dep_p1 = parallel_pool(a.dep_e1, &a.dep_arg1);
  a.dep_a2 = conv3x3(a.dep_p1, P.weights(DepConv2), P.bias(DepConv2), kConvShapes[DepConv2].out);
  a.dep_e2 = elu(a.dep_a2);
  a.dep_p2 = parallel_pool(a.dep_e2, &a.dep_arg2);

  a.cat1 = detail::concat({&a.img_p2, &a.dep_p2});
  a.fuse1_a = conv3x3(a.cat1, P.weights(Fuse1), P.bias(Fuse1), kConvShapes[Fuse1].out);
  a.fuse1_e = elu(a.fuse1_a);
  a.up1 = detail::upsample2(a.fuse1_e);

  a.cat2 = detail::concat({&a.up1, &a.img_p1, &a.dep_p1});
  a.fuse2_a = conv3x3(a.cat2, P.weights(Fuse2), P.bias(Fuse2), kConvShapes[Fuse2].out);
  a.fuse2_e = elu(a.fuse2_a);
  a.up2 = detail::upsample2(a.fuse2_e);

  a.head = conv3x3(a.up2, P.weights(Head), P.bias(Head), 1);

  std::vector<double> z(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = detail::softplus(a.head.v[i] + a.z_fill[i]);
    // softplus underflows to 0 only for inputs below about -745
    if (!(z[i] > 0)) z[i] = std::numeric_limits<double>::min();
  }
  out.z_refined = DepthMap(w, h, std::move(z));
  return out;
}

/// Reverse pass: dL/dparams (flat, declaration order) from dL/dzRefined.
inline std::vector<double> mdr_backward(const MdrActivations& a, const Grid<double>& grad_z, const MdrParams& params) {
  if (a.params_snapshot != params.flat())
    throw ContractError("mdr_backward: activations were produced with different parameters");
  if (!grad_z.same_shape(a.width, a.height)) throw ShapeError("mdr_backward: gradient size does not match forward");

  std::vector<double> g(MdrParams::flat_size(), 0.0);
  const auto& L = MdrParams::layout();
  auto gw = [&](int layer) { return g.data() + L[2 * layer].offset; };
  auto gb = [&](int layer) { return g.data() + L[2 * layer + 1].offset; };
  using detail::conv3x3_backward;
  using detail::elu_backward;

  Tensor g_head(1, a.height, a.width);
  for (std::size_t i = 0; i < g_head.v.size(); ++i)
    g_head.v[i] = grad_z[i] * detail::sigmoid(a.head.v[i] + a.z_fill[i]);

  const Tensor g_up2 = conv3x3_backward(a.up2, params.weights(Head), g_head, gw(Head), gb(Head), true);
  const Tensor g_fuse2_a = elu_backward(a.fuse2_a, detail::upsample2_backward(a.fuse2_e, g_up2));
  const Tensor g_cat2 = conv3x3_backward(a.cat2, params.weights(Fuse2), g_fuse2_a, gw(Fuse2), gb(Fuse2), true);

  const int c_up1 = a.up1.c, c_p1 = a.img_p1.c;
  const Tensor g_up1 = detail::slice_channels(g_cat2, 0, c_up1);
  Tensor g_img_p1 = detail::slice_channels(g_cat2, c_up1, c_p1);
  Tensor g_dep_p1 = detail::slice_channels(g_cat2, c_up1 + c_p1, a.dep_p1.c);

  const Tensor g_fuse1_a = elu_backward(a.fuse1_a, detail::upsample2_backward(a.fuse1_e, g_up1));
  const Tensor g_cat1 = conv3x3_backward(a.cat1, params.weights(Fuse1), g_fuse1_a, gw(Fuse1), gb(Fuse1), true);
  const Tensor g_img_p2 = detail::slice_channels(g_cat1, 0, a.img_p2.c);
  const Tensor g_dep_p2 = detail::slice_channels(g_cat1, a.img_p2.c, a.dep_p2.c);

  auto branch = [&](const Tensor& in, const Tensor& a1, const Tensor& e1, const Tensor& p1, const Tensor& a2,
                    const Tensor& e2, const std::vector<std::uint32_t>& arg1, const std::vector<std::uint32_t>& arg2,
                    const Tensor& g_p2, Tensor& g_p1, int conv1, int conv2) {
    const Tensor g_a2 = elu_backward(a2, parallel_pool_backward(e2, arg2, g_p2));
    detail::add_into(g_p1, conv3x3_backward(p1, params.weights(conv2), g_a2, gw(conv2), gb(conv2), true));
    const Tensor g_a1 = elu_backward(a1, parallel_pool_backward(e1, arg1, g_p1));
    conv3x3_backward(in, params.weights(conv1), g_a1, gw(conv1), gb(conv1), false);
  };
  branch(a.img_in, a.img_a1, a.img_e1, a.img_p1, a.img_a2, a.img_e2, a.img_arg1, a.img_arg2, g_img_p2, g_img_p1,
         ImgConv1, ImgConv2);
  branch(a.dep_in, a.dep_a1, a.dep_e1, a.dep_p1, a.dep_a2, a.dep_e2, a.dep_arg1, a.dep_arg2, g_dep_p2, g_dep_p1,
         DepConv1, DepConv2);
  return g;
}

struct MdrInputs {
  ImageBuffer image;
  DepthMap z_mesh;
  ValidMask mask;
};

using BackwardFn = std::function<std::vector<double>(const MdrActivations&, const Grid<double>&, const MdrParams&)>;

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t samples = 0;
  std::size_t skipped_kinks = 0;  // probes whose +-eps evaluations changed a pooling choice
};

/// Central finite differences of the test loss sum_i c_i zRefined_i (random
/// c from `seed`) against the analytic gradient, on at least `min_samples`
/// coordinates spread evenly over every tensor. Error per coordinate is
/// |g_fd - g_bp| / max(1e-8, |g_fd| + |g_bp|). A probe whose two
/// evaluations route some min/max pool differently straddles a kink; it is
/// redrawn.
inline GradCheckReport grad_check_report(const MdrParams& params, const MdrInputs& in, double eps = 1e-4,
                                         std::uint64_t seed = 0, std::size_t min_samples = 200,
                                         const BackwardFn& backward = mdr_backward) {
  std::mt19937_64 rng(seed);
  const std::size_t npx = static_cast<std::size_t>(in.image.width()) * in.image.height();
  Grid<double> c(in.image.width(), in.image.height());
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t i = 0; i < npx; ++i) c[i] = unit(rng);
  auto run = [&](const MdrParams& p) {
    auto out = mdr_forward(in.image, in.z_mesh, in.mask, p);
    double s = 0;
    for (std::size_t i = 0; i < npx; ++i) s += c[i] * out.z_refined[i];
    return std::pair{s, std::move(out.acts)};
  };
  auto same_routing = [](const MdrActivations& a, const MdrActivations& b) {
    return a.img_arg1 == b.img_arg1 && a.img_arg2 == b.img_arg2 && a.dep_arg1 == b.dep_arg1 &&
           a.dep_arg2 == b.dep_arg2;
  };

  const auto fwd = mdr_forward(in.image, in.z_mesh, in.mask, params);
  const std::vector<double> g_bp = backward(fwd.acts, c, params);

  const auto& L = MdrParams::layout();
  const std::size_t per_tensor = (min_samples + L.size() - 1) / L.size();
  GradCheckReport report;
  MdrParams probe = params;
  for (const auto& info : L) {
    std::uniform_int_distribution<std::size_t> pick(0, info.size - 1);
    std::size_t taken = 0;
    for (std::size_t attempt = 0; taken < per_tensor && attempt < 20 * per_tensor; ++attempt) {
      const std::size_t i = info.offset + pick(rng);
      const double x0 = probe.flat()[i];
      probe.flat()[i] = x0 + eps;
      const auto [fp, ap] = run(probe);
      probe.flat()[i] = x0 - eps;
      const auto [fm, am] = run(probe);
      probe.flat()[i] = x0;
      if (!same_routing(ap, fwd.acts) || !same_routing(am, fwd.acts)) {
        ++report.skipped_kinks;
        continue;
      }
      const double fd = (fp - fm) / (2 * eps);
      report.max_rel_error =
          std::max(report.max_rel_error, std::abs(fd - g_bp[i]) / std::max(1e-8, std::abs(fd) + std::abs(g_bp[i])));
      ++taken;
      ++report.samples;
    }
  }
  return report;
}

inline double grad_check(const MdrParams& params, const MdrInputs& in, double eps = 1e-4, std::uint64_t seed = 0,
                         std::size_t min_samples = 200, const BackwardFn& backward = mdr_backward) {
  return grad_check_report(params, in, eps, seed, min_samples, backward).max_rel_error;
}

/// One frame of self-supervised training data.
struct TrainingFrame {
  ImageBuffer image;
  DepthMap z_mesh;
  ValidMask mask;
  DepthMap z_features;  // sparse supervision
};

struct TrainLog {
  std::vector<double> objective;  // before each step, then after the last
  double initial() const { return objective.front(); }
  double last() const { return objective.back(); }
};

/// wS * sparse consistency + wL * smoothness of zRefined, and its gradient
/// with respect to the parameters.
inline std::pair<double, std::vector<double>> training_objective(const TrainingFrame& f, const MdrParams& p,
                                                                 const LossWeights& wts) {
  const auto out = mdr_forward(f.image, f.z_mesh, f.mask, p);
  const auto ls = sparse_consistency_loss_grad(out.z_refined, f.z_features);
  const auto ll = smoothness_loss_grad(out.z_refined, f.image);
  Grid<double> g(out.z_refined.width(), out.z_refined.height());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = wts.wS * ls.grad[i] + wts.wL * ll.grad[i];
  return {wts.wS * ls.value + wts.wL * ll.value, mdr_backward(out.acts, g, p)};
}

/// Plain gradient descent on the training objective.
inline TrainLog train(MdrParams& params, const TrainingFrame& frame, int steps, double step_size,
                      const LossWeights& wts = {}) {
  TrainLog log;
  for (int s = 0; s < steps; ++s) {
    auto [value, grad] = training_objective(frame, params, wts);
    log.objective.push_back(value);
    for (std::size_t i = 0; i < grad.size(); ++i) params.flat()[i] -= step_size * grad[i];
  }
  log.objective.push_back(training_objective(frame, params, wts).first);
  return log;
}

}  // namespace sketchdepth::mdr
