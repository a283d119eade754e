#pragma once

#include <memory>
#include <optional>
#include <string>

#include "sketchdepth/cdt.hpp"
#include "sketchdepth/fill.hpp"
#include "sketchdepth/losses.hpp"
#include "sketchdepth/mdr.hpp"
#include "sketchdepth/meshdepth.hpp"
#include "sketchdepth/metrics.hpp"

namespace sketchdepth {

/// Final dense estimator: (image, zRefined, K) -> zDense of the same size.
class DepthEstimator {
 public:
  virtual ~DepthEstimator() = default;
  virtual std::string id() const = 0;
  virtual DepthMap estimate(const ImageBuffer& image, const DepthMap& z_refined, const Intrinsics& k) const = 0;
};

class PassthroughEstimator final : public DepthEstimator {
 public:
  std::string id() const override { return "passthrough"; }
  DepthMap estimate(const ImageBuffer&, const DepthMap& z_refined, const Intrinsics&) const override {
    return z_refined;
  }
};

inline std::unique_ptr<DepthEstimator> make_estimator(const std::string& id) {
  if (id == "passthrough") return std::make_unique<PassthroughEstimator>();
  throw DomainError("unknown estimator \"" + id + "\"");
}

inline InterpolationMode parse_mode(const std::string& s) {
  if (s == "planar3d") return InterpolationMode::Planar3D;
  if (s == "barycentric") return InterpolationMode::BarycentricZ;
  throw DomainError("unknown interpolation mode \"" + s + "\"");
}

struct PipelineConfig {
  InterpolationMode mode = InterpolationMode::Planar3D;
  /// "identity" or the path the parameters were loaded from.
  std::string mdr = "identity";
  std::optional<mdr::MdrParams> mdr_params;
  std::string estimator = "passthrough";
  LossWeights weights;
  SsimConfig ssim;
  DeltaThresholds thresholds;
  std::uint64_t seed = 0;
  double snap_tolerance = cdt::kDefaultSnapTolerance;

  void validate() const {
    if (mdr != "identity" && !mdr_params) throw ContractError("pipeline: mdr \"" + mdr + "\" has no loaded parameters");
    if (!(snap_tolerance > 0)) throw DomainError("pipeline: snap tolerance must be positive");
    weights.validate();
    thresholds.validate();
    make_estimator(estimator);
  }
};

enum class Stage { Mesh, Refined, Dense };

inline Stage parse_stage(const std::string& s) {
  if (s == "mesh") return Stage::Mesh;
  if (s == "refined") return Stage::Refined;
  if (s == "dense") return Stage::Dense;
  throw DomainError("unknown stage \"" + s + "\"");
}

struct FrameCompletion {
  cdt::Mesh mesh;
  DepthMap z_mesh;
  ValidMask mask;
  DepthMap z_refined;  // empty when stopped at Stage::Mesh
  DepthMap z_dense;    // empty unless Stage::Dense
};

namespace detail {

/// Re-raises a library error with the stage name prefixed, keeping its
/// category.
template <class F>
auto tagged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.category(), std::string(stage) + ": " + e.what());
  }
}

inline int round_up4(int n) { return (n + 3) / 4 * 4; }

}  // namespace detail

/// Mesh stage: prepare -> CDT -> interpolation.
inline RoughMeshDepth mesh_stage(const FeatureSet& features, const Intrinsics& k, const PipelineConfig& cfg) {
  return detail::tagged("mesh", [&] {
    features.validate(k.width, k.height);
    auto mesh = cdt::triangulate(cdt::prepare_sites(features, cfg.snap_tolerance));
    return interpolate_mesh_depth(mesh, k, cfg.mode);
  });
}

/// Refinement stage. Sizes not divisible by 4 are padded on the right and
/// bottom (image edge-replicated, depth and mask invalid) and cropped back.
inline DepthMap refine_stage(const ImageBuffer& image, const DepthMap& z_mesh, const ValidMask& mask,
                             const PipelineConfig& cfg) {
  return detail::tagged("refine", [&] {
    const int w = image.width(), h = image.height();
    if (!z_mesh.same_shape(w, h) || !mask.same_shape(w, h)) throw ShapeError("image, depth and mask differ in size");
    if (!cfg.mdr_params) {
      std::vector<double> masked(z_mesh.size());
      for (std::size_t i = 0; i < masked.size(); ++i) masked[i] = mask[i] ? z_mesh[i] : 0.0;
      return nearest_valid_fill(DepthMap(w, h, std::move(masked)));
    }
    const int pw = detail::round_up4(w), ph = detail::round_up4(h);
    if (pw == w && ph == h) {
      const auto out = mdr::mdr_forward(image, z_mesh, mask, *cfg.mdr_params);
      return DepthMap(w, h, std::vector<double>(out.z_refined.vector()));
    }
    const int c = image.channels();
    std::vector<double> img(static_cast<std::size_t>(pw) * ph * c);
    DepthMap z(pw, ph);
    ValidMask m(pw, ph);
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x) {
        const int sx = std::min(x, w - 1), sy = std::min(y, h - 1);
        for (int k = 0; k < c; ++k) img[(static_cast<std::size_t>(y) * pw + x) * c + k] = image(sx, sy, k);
        if (x < w && y < h) z(x, y) = z_mesh(x, y), m(x, y) = mask(x, y);
      }
    const auto out = mdr::mdr_forward(ImageBuffer(pw, ph, c, std::move(img)), z, m, *cfg.mdr_params);
    std::vector<double> crop(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) crop[static_cast<std::size_t>(y) * w + x] = out.z_refined(x, y);
    return DepthMap(w, h, std::move(crop));
  });
}

inline DepthMap estimate_stage(const ImageBuffer& image, const DepthMap& z_refined, const Intrinsics& k,
                               const PipelineConfig& cfg) {
  return detail::tagged("estimate", [&] {
    auto z = make_estimator(cfg.estimator)->estimate(image, z_refined, k);
    if (!z.same_shape(z_refined.width(), z_refined.height()))
      throw ContractError("estimator \"" + cfg.estimator + "\" changed the output size");
    return z;
  });
}

/// zDense = f(g(h(features))), returning every intermediate.
inline FrameCompletion complete_frame(const ImageBuffer& image, const FeatureSet& features, const Intrinsics& k,
                                      const PipelineConfig& cfg = {}, Stage until = Stage::Dense) {
  detail::tagged("config", [&] {
    cfg.validate();
    if (image.width() != k.width || image.height() != k.height)
      throw ShapeError("image size differs from the intrinsics");
  });
  FrameCompletion out;
  auto rough = mesh_stage(features, k, cfg);
  out.mesh = std::move(rough.mesh);
  out.z_mesh = std::move(rough.depth);
  out.mask = std::move(rough.mask);
  if (until == Stage::Mesh) return out;
  out.z_refined = refine_stage(image, out.z_mesh, out.mask, cfg);
  if (until == Stage::Refined) return out;
  out.z_dense = estimate_stage(image, out.z_refined, k, cfg);
  return out;
}

}  // namespace sketchdepth
