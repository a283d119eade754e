#include <gtest/gtest.h>

#include "sketchdepth/pipeline.hpp"
#include "sketchdepth/synth.hpp"
#include "test_util.hpp"

using namespace sketchdepth;

namespace {

struct Scene {
  synth::SceneSpec spec;
  synth::Rendering r;
  FeatureSet fs;
};

Scene make_scene(int w, int h, std::uint64_t seed = 2) {
  Scene s;
  s.spec = synth::box_wall_scene(seed, w, h);
  s.r = synth::render(s.spec);
  s.fs = synth::sample_features(s.spec, 60, 6, 0.0, seed);
  return s;
}

class DoublingEstimator final : public DepthEstimator {
 public:
  std::string id() const override { return "double"; }
  DepthMap estimate(const ImageBuffer&, const DepthMap& z, const Intrinsics&) const override {
    std::vector<double> v(z.vector());
    for (auto& x : v) x *= 2;
    return DepthMap(z.width(), z.height(), std::move(v));
  }
};

}  // namespace

TEST(Pipeline, IdentityPassthroughReproducesMeshOnPlanarScene) {
  synth::SceneSpec spec;
  spec.camera = Intrinsics(60, 60, 31.5, 23.5, 64, 48);
  spec.planes.push_back(synth::plane(Vec3(0.2, -0.1, 1).normalized(), 3.0));
  const auto r = synth::render(spec);
  FeatureSet fs;
  for (Vec2 c : {Vec2(0, 0), Vec2(63, 0), Vec2(63, 47), Vec2(0, 47), Vec2(20, 30)})
    fs.points.push_back({c, r.depth(static_cast<int>(c.x()), static_cast<int>(c.y()))});
  const auto out = complete_frame(r.rgb, fs, spec.camera);
  EXPECT_EQ(out.mask.count(), out.mask.size());
  for (std::size_t i = 0; i < out.z_mesh.size(); ++i)
    if (out.mask[i]) {
      ASSERT_EQ(out.z_dense[i], out.z_mesh[i]);
    }
  EXPECT_EQ(out.z_refined, out.z_dense);
}

TEST(Pipeline, IdentityFillsOutsideTheHull) {
  const auto s = make_scene(64, 48);
  const auto out = complete_frame(s.r.rgb, s.fs, s.spec.camera);
  EXPECT_LT(out.mask.count(), out.mask.size());
  EXPECT_EQ(out.z_refined.valid_count(), out.z_refined.size());
  EXPECT_EQ(out.z_refined, nearest_valid_fill(out.z_mesh));
}

TEST(Pipeline, OutputDimsEqualInputDimsWithPadding) {
  for (auto [w, h] : {std::pair{64, 48}, std::pair{66, 49}, std::pair{61, 47}}) {
    const auto s = make_scene(w, h);
    PipelineConfig cfg;
    cfg.mdr = "random";
    cfg.mdr_params = mdr::MdrParams::random(3);
    const auto out = complete_frame(s.r.rgb, s.fs, s.spec.camera, cfg);
    for (const DepthMap* d : {&out.z_mesh, &out.z_refined, &out.z_dense}) EXPECT_TRUE(d->same_shape(w, h));
    EXPECT_TRUE(out.mask.same_shape(w, h));
    EXPECT_EQ(out.z_refined.valid_count(), out.z_refined.size());
  }
}

TEST(Pipeline, PaddedRefinementMatchesDirectForwardOnAlignedSizes) {
  const auto s = make_scene(64, 48);
  PipelineConfig cfg;
  cfg.mdr = "random";
  cfg.mdr_params = mdr::MdrParams::random(4);
  const auto out = complete_frame(s.r.rgb, s.fs, s.spec.camera, cfg);
  const auto direct = mdr::mdr_forward(s.r.rgb, out.z_mesh, out.mask, *cfg.mdr_params);
  EXPECT_EQ(out.z_refined.vector(), direct.z_refined.vector());
}

TEST(Pipeline, StagingIsConsistent) {
  const auto s = make_scene(64, 48);
  PipelineConfig cfg;
  cfg.mdr = "random";
  cfg.mdr_params = mdr::MdrParams::random(5);
  const auto mesh_only = complete_frame(s.r.rgb, s.fs, s.spec.camera, cfg, Stage::Mesh);
  const auto refined = complete_frame(s.r.rgb, s.fs, s.spec.camera, cfg, Stage::Refined);
  const auto dense = complete_frame(s.r.rgb, s.fs, s.spec.camera, cfg, Stage::Dense);
  EXPECT_EQ(mesh_only.z_mesh, refined.z_mesh);
  EXPECT_EQ(mesh_only.z_refined.size(), 0u);
  EXPECT_EQ(refined.z_dense.size(), 0u);
  EXPECT_EQ(refined.z_refined, dense.z_refined);
  // Stage-by-stage composition equals the single call.
  const auto zr = refine_stage(s.r.rgb, mesh_only.z_mesh, ValidMask::from_depth(mesh_only.z_mesh), cfg);
  EXPECT_EQ(zr, dense.z_refined);
  EXPECT_EQ(estimate_stage(s.r.rgb, zr, s.spec.camera, cfg), dense.z_dense);
}

TEST(Pipeline, CustomEstimatorPlugsIn) {
  const auto s = make_scene(64, 48);
  const auto out = complete_frame(s.r.rgb, s.fs, s.spec.camera);
  const auto z = DoublingEstimator().estimate(s.r.rgb, out.z_refined, s.spec.camera);
  EXPECT_EQ(z[10], 2 * out.z_refined[10]);
}

TEST(Pipeline, ErrorsCarryStageAndCategory) {
  const auto s = make_scene(64, 48);
  FeatureSet degenerate;
  degenerate.points = {{Vec2(1, 1), 1.0}, {Vec2(2, 2), 1.0}, {Vec2(3, 3), 1.0}};
  try {
    complete_frame(s.r.rgb, degenerate, s.spec.camera);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::DegenerateInput);
    EXPECT_EQ(std::string(e.what()).rfind("mesh: ", 0), 0u);
  }
  PipelineConfig cfg;
  cfg.mdr = "weights.bin";
  try {
    complete_frame(s.r.rgb, s.fs, s.spec.camera, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::Contract);
    EXPECT_EQ(std::string(e.what()).rfind("config: ", 0), 0u);
  }
  cfg = {};
  cfg.estimator = "kbnet";
  EXPECT_THROW(complete_frame(s.r.rgb, s.fs, s.spec.camera, cfg), Error);
  EXPECT_THROW(complete_frame(ImageBuffer(8, 8, 3), s.fs, s.spec.camera), Error);
  FeatureSet outside = s.fs;
  outside.points[0].pixel = Vec2(500, 2);
  try {
    complete_frame(s.r.rgb, outside, s.spec.camera);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::Domain);
  }
}

TEST(Pipeline, ParsersRejectUnknownNames) {
  EXPECT_EQ(parse_mode("planar3d"), InterpolationMode::Planar3D);
  EXPECT_EQ(parse_mode("barycentric"), InterpolationMode::BarycentricZ);
  EXPECT_THROW(parse_mode("cubic"), DomainError);
  EXPECT_EQ(parse_stage("refined"), Stage::Refined);
  EXPECT_THROW(parse_stage("final"), DomainError);
  EXPECT_THROW(make_estimator("kbnet"), DomainError);
}
