#include <gtest/gtest.h>

#include <random>

#include "sketchdepth/core.hpp"
#include "test_util.hpp"

#include <Eigen/Geometry>

using namespace sketchdepth;

namespace {

Mat3 random_rotation(std::mt19937_64& rng) {
  Eigen::Vector4d q(testutil::uniform(rng, -1, 1), testutil::uniform(rng, -1, 1), testutil::uniform(rng, -1, 1),
                    testutil::uniform(rng, -1, 1));
  q.normalize();
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
}

}  // namespace

TEST(BackProject, PrincipalPointIsOpticalAxis) {
  const auto k = testutil::vga_intrinsics();
  const Vec3 p = back_project({k.cx, k.cy}, 2.0, k);
  EXPECT_EQ(p, Vec3(0, 0, 2.0));
}

TEST(BackProject, UnitTangent) {
  const Intrinsics k(100, 100, 50, 40, 200, 100);
  const Vec3 p = back_project({k.cx + k.fx, k.cy}, 1.0, k);
  EXPECT_DOUBLE_EQ(p.x(), 1.0);
  EXPECT_DOUBLE_EQ(p.y(), 0.0);
  EXPECT_DOUBLE_EQ(p.z(), 1.0);
}

TEST(BackProject, RejectsBadInput) {
  const auto k = testutil::vga_intrinsics();
  EXPECT_THROW(back_project({10, 10}, 0.0, k), DomainError);
  EXPECT_THROW(back_project({10, 10}, -1.0, k), DomainError);
  EXPECT_THROW(back_project({640, 10}, 1.0, k), DomainError);
  EXPECT_THROW(back_project({-0.1, 10}, 1.0, k), DomainError);
}

TEST(Project, OpticalAxis) {
  const auto k = testutil::vga_intrinsics();
  const Projection p = project({0, 0, 3}, k);
  EXPECT_EQ(p.pixel, Vec2(k.cx, k.cy));
  EXPECT_EQ(p.depth, 3.0);
}

TEST(Project, UnitTangent) {
  const auto k = testutil::vga_intrinsics();
  const Projection p = project({1, 0, 1}, k);
  EXPECT_DOUBLE_EQ(p.pixel.x(), k.cx + k.fx);
  EXPECT_DOUBLE_EQ(p.pixel.y(), k.cy);
  EXPECT_EQ(p.depth, 1.0);
}

TEST(Project, BehindCameraIsDomainError) {
  const auto k = testutil::vga_intrinsics();
  EXPECT_THROW(project({0, 0, 0}, k), DomainError);
  EXPECT_THROW(project({1, 2, -1}, k), DomainError);
}

TEST(Project, RoundTripProperty) {
  const auto k = testutil::vga_intrinsics();
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const Vec2 px(testutil::uniform(rng, 0, k.width), testutil::uniform(rng, 0, k.height));
    const double d = testutil::uniform(rng, 0.1, 50);
    const Projection p = project(back_project(px, d, k), k);
    EXPECT_NEAR(p.pixel.x(), px.x(), 1e-9);
    EXPECT_NEAR(p.pixel.y(), px.y(), 1e-9);
    EXPECT_NEAR(p.depth, d, 1e-9);
  }
}

TEST(Transform, Identity) {
  const Vec3 p(1.5, -2, 3);
  EXPECT_EQ(transform(p, Pose::identity()), p);
}

TEST(Transform, PureTranslation) {
  EXPECT_EQ(transform({0, 0, 2}, Pose::translation({0, 0, 1})), Vec3(0, 0, 3));
}

TEST(Transform, ComposeWithInverseIsIdentity) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 100; ++i) {
    const Pose pose(random_rotation(rng), Vec3(testutil::uniform(rng, -5, 5), testutil::uniform(rng, -5, 5),
                                                testutil::uniform(rng, -5, 5)));
    const Vec3 p(testutil::uniform(rng, -10, 10), testutil::uniform(rng, -10, 10), testutil::uniform(rng, -10, 10));
    EXPECT_LT((transform(p, pose * pose.inverse()) - p).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((transform(p, pose.inverse() * pose) - p).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((transform(transform(p, pose), pose.inverse()) - p).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Pose, RejectsNonRotation) {
  Mat3 scaled = Mat3::Identity() * 1.01;
  EXPECT_THROW(Pose(scaled, Vec3::Zero()), DomainError);
  Mat3 reflect = Mat3::Identity();
  reflect(2, 2) = -1;
  EXPECT_THROW(Pose(reflect, Vec3::Zero()), DomainError);
}

TEST(Intrinsics, Invariants) {
  EXPECT_THROW(Intrinsics(0, 1, 1, 1, 4, 4), DomainError);
  EXPECT_THROW(Intrinsics(1, -1, 1, 1, 4, 4), DomainError);
  EXPECT_THROW(Intrinsics(1, 1, 4, 1, 4, 4), DomainError);
  EXPECT_THROW(Intrinsics(1, 1, 1, -0.5, 4, 4), DomainError);
  EXPECT_NO_THROW(Intrinsics(1, 1, 0, 0, 4, 4));
}

TEST(DepthMap, RejectsNegativeAndNonFinite) {
  EXPECT_THROW(DepthMap(2, 1, std::vector<double>{1.0, -1.0}), DomainError);
  EXPECT_THROW(DepthMap(2, 1, std::vector<double>{1.0, std::nan("")}), DomainError);
  EXPECT_THROW(DepthMap(2, 1, std::vector<double>{1.0, INFINITY}), DomainError);
  EXPECT_THROW(DepthMap(2, 2, std::vector<double>{1.0}), ShapeError);
}

TEST(DepthMap, MaskConsistency) {
  std::mt19937_64 rng(13);
  std::vector<double> v(37 * 23);
  for (auto& d : v) d = testutil::uniform(rng, 0, 1) < 0.4 ? 0.0 : testutil::uniform(rng, 0.01, 9);
  const DepthMap depth(37, 23, v);
  const ValidMask mask = ValidMask::from_depth(depth);
  std::size_t n = 0;
  for (int y = 0; y < 23; ++y)
    for (int x = 0; x < 37; ++x) {
      EXPECT_EQ(mask(x, y) != 0, v[y * 37 + x] > 0);
      EXPECT_EQ(depth.valid(x, y), v[y * 37 + x] > 0);
      n += v[y * 37 + x] > 0;
    }
  EXPECT_EQ(mask.count(), n);
  EXPECT_EQ(depth.valid_count(), n);
}

TEST(ImageBuffer, Invariants) {
  EXPECT_THROW(ImageBuffer(2, 2, 2), ShapeError);
  EXPECT_THROW(ImageBuffer(2, 1, 1, std::vector<double>{0.5, 1.5}), DomainError);
  EXPECT_THROW(ImageBuffer(2, 1, 3, std::vector<double>{0.5, 0.5}), ShapeError);
  const ImageBuffer img(1, 1, 3, std::vector<double>{0.3, 0.6, 0.9});
  EXPECT_NEAR(img.intensity()(0, 0), 0.6, 1e-15);
  EXPECT_EQ(img(0, 0, 2), 0.9);
}

TEST(FeatureSet, Validate) {
  FeatureSet fs;
  fs.points.push_back({{1, 1}, 1.0});
  EXPECT_NO_THROW(fs.validate(4, 4));
  fs.points.push_back({{4, 1}, 1.0});
  EXPECT_THROW(fs.validate(4, 4), DomainError);
  fs.points.pop_back();
  fs.lines.push_back({{0, 0}, 1.0, {0, 0}, 2.0});
  EXPECT_THROW(fs.validate(4, 4), DomainError);
  fs.lines.back().end = {3, 3};
  fs.lines.back().end_depth = 0;
  EXPECT_THROW(fs.validate(4, 4), DomainError);
}
