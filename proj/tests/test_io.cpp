#include <gtest/gtest.h>

#include <bit>
#include <fstream>
#include <set>

#include "sketchdepth/io.hpp"
#include "test_util.hpp"

using namespace sketchdepth;
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

}  // namespace

TEST(DepthPng, RoundTripEqualsMillimeterQuantization) {
  testutil::TempDir tmp("depthpng");
  std::mt19937_64 rng(1);
  std::vector<double> d(37 * 23);
  for (auto& v : d) v = rng() % 7 == 0 ? 0.0 : testutil::uniform(rng, 0.0005, 65.535);
  d[0] = 65.535;
  d[1] = 0.001;
  const DepthMap depth(37, 23, d);
  io::write_depth_png(tmp / "d.png", depth);
  const auto back = io::read_depth_png(tmp / "d.png");
  const auto q = io::quantize_depth(depth);
  ASSERT_TRUE(back.same_shape(37, 23));
  for (std::size_t i = 0; i < d.size(); ++i) {
    ASSERT_TRUE(same_bits(back[i], q[i])) << i;
    EXPECT_LE(std::abs(back[i] - depth[i]), 0.0005 + 1e-12);
    EXPECT_EQ(back[i] > 0, depth[i] > 0);
  }
  io::write_depth_png(tmp / "e.png", back);
  EXPECT_EQ(read_text(tmp / "d.png"), read_text(tmp / "e.png"));
}

TEST(DepthPng, StatedScaleAndInvalidPixels) {
  testutil::TempDir tmp("depthscale");
  io::write_png(tmp / "raw.png", 2, 1, 1, 16, {2000, 0});
  const auto d = io::read_depth_png(tmp / "raw.png");
  EXPECT_EQ(d(0, 0), 2.0);
  EXPECT_EQ(d(1, 0), 0.0);
  const auto mask = ValidMask::from_depth(d);
  EXPECT_TRUE(mask(0, 0));
  EXPECT_FALSE(mask(1, 0));
}

TEST(DepthPng, FormatAndRangeErrors) {
  testutil::TempDir tmp("depthbad");
  io::write_png(tmp / "g8.png", 2, 2, 1, 8, {1, 2, 3, 4});
  io::write_png(tmp / "rgb16.png", 1, 1, 3, 16, {1, 2, 3});
  EXPECT_THROW(io::read_depth_png(tmp / "g8.png"), FormatError);
  EXPECT_THROW(io::read_depth_png(tmp / "rgb16.png"), FormatError);
  write_text(tmp / "junk.png", "not a png at all");
  EXPECT_THROW(io::read_depth_png(tmp / "junk.png"), FormatError);
  const auto good = read_text(tmp / "g8.png");
  write_text(tmp / "trunc.png", good.substr(0, good.size() / 2));
  EXPECT_THROW(io::read_png(tmp / "trunc.png"), FormatError);
  EXPECT_THROW(io::read_depth_png(tmp / "missing.png"), IoError);
  EXPECT_THROW(io::write_depth_png(tmp / "far.png", DepthMap(1, 1, 70.0)), DomainError);
  EXPECT_THROW(io::write_depth_png(tmp / "near.png", DepthMap(1, 1, 0.0004)), DomainError);
}

TEST(Dmap, BitExactRoundTripAndErrors) {
  testutil::TempDir tmp("dmap");
  std::vector<double> d{0.0, 1.0 / 3.0, 5e-324, 1e300, 2.5, std::nextafter(1.0, 2.0)};
  const DepthMap depth(3, 2, d);
  io::write_dmap(tmp / "a.dmap", depth);
  const auto back = io::read_dmap(tmp / "a.dmap");
  ASSERT_TRUE(back.same_shape(3, 2));
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_TRUE(same_bits(back[i], d[i]));
  const auto bytes = read_text(tmp / "a.dmap");
  EXPECT_EQ(bytes.substr(0, 4), "DMAP");
  EXPECT_EQ(bytes.size(), 12u + 6 * 8);
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 3);  // little-endian width
  write_text(tmp / "short.dmap", bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(io::read_dmap(tmp / "short.dmap"), FormatError);
  write_text(tmp / "magic.dmap", "XMAP" + bytes.substr(4));
  EXPECT_THROW(io::read_dmap(tmp / "magic.dmap"), FormatError);
  std::string neg = bytes;
  const auto minus = std::bit_cast<std::uint64_t>(-1.0);
  for (int b = 0; b < 8; ++b) neg[12 + b] = static_cast<char>((minus >> (8 * b)) & 0xff);
  write_text(tmp / "neg.dmap", neg);
  EXPECT_THROW(io::read_dmap(tmp / "neg.dmap"), FormatError);
}

TEST(Features, ParsesExamples) {
  const auto empty = io::features_from_json(nlohmann::json::parse(R"({"points": [], "lines": []})"));
  EXPECT_EQ(empty.points.size(), 0u);
  EXPECT_EQ(empty.lines.size(), 0u);
  const auto one = io::features_from_json(nlohmann::json::parse(R"({"points": [[10, 20, 1.5]], "lines": []})"));
  ASSERT_EQ(one.points.size(), 1u);
  EXPECT_EQ(one.points[0].pixel, Vec2(10, 20));
  EXPECT_EQ(one.points[0].depth, 1.5);
  const auto line =
      io::features_from_json(nlohmann::json::parse(R"({"points": [], "lines": [[1, 2, 3, 4, 5, 6]]})"));
  ASSERT_EQ(line.lines.size(), 1u);
  EXPECT_EQ(line.lines[0].end, Vec2(4, 5));
  EXPECT_EQ(line.lines[0].end_depth, 6.0);
}

TEST(Features, RoundTripThousandRandomIsLossless) {
  testutil::TempDir tmp("features");
  std::mt19937_64 rng(7);
  const auto fs = testutil::random_features(rng, 700, 300, 640, 480);
  io::write_features(tmp / "f.json", fs);
  const auto back = io::read_features(tmp / "f.json");
  ASSERT_EQ(back.points.size(), fs.points.size());
  ASSERT_EQ(back.lines.size(), fs.lines.size());
  for (std::size_t i = 0; i < fs.points.size(); ++i) {
    EXPECT_TRUE(same_bits(back.points[i].pixel.x(), fs.points[i].pixel.x()));
    EXPECT_TRUE(same_bits(back.points[i].pixel.y(), fs.points[i].pixel.y()));
    EXPECT_TRUE(same_bits(back.points[i].depth, fs.points[i].depth));
  }
  for (std::size_t i = 0; i < fs.lines.size(); ++i) {
    EXPECT_TRUE(same_bits(back.lines[i].start.x(), fs.lines[i].start.x()));
    EXPECT_TRUE(same_bits(back.lines[i].end_depth, fs.lines[i].end_depth));
  }
  EXPECT_EQ(io::features_to_string(back), read_text(tmp / "f.json"));
  // Independent parse of the canonical text agrees with the writer's input.
  const auto j = nlohmann::json::parse(read_text(tmp / "f.json"));
  EXPECT_EQ(j["points"].size(), 700u);
  EXPECT_EQ(j["lines"][5][4].get<double>(), fs.lines[5].end.y());
}

TEST(Features, DiagnosticsNameTheField) {
  auto err = [](const char* text) -> std::string {
    try {
      io::features_from_json(nlohmann::json::parse(text), "f.json");
    } catch (const FormatError& e) {
      return e.what();
    }
    return "";
  };
  EXPECT_NE(err(R"({"points": [[1, 2, 3], [4, 5, -1]], "lines": []})").find("points[1]"), std::string::npos);
  EXPECT_NE(err(R"({"points": [], "lines": [[1, 2, 3, 4, 5]]})").find("lines[0]"), std::string::npos);
  EXPECT_NE(err(R"({"points": [[1, "a", 3]], "lines": []})").find("points[0][1]"), std::string::npos);
  EXPECT_NE(err(R"({"points": []})").find("lines"), std::string::npos);
  testutil::TempDir tmp("featbad");
  write_text(tmp / "bad.json", "{\"points\": [[1, 2, 3]\n");
  EXPECT_THROW(io::read_features(tmp / "bad.json"), FormatError);
}

TEST(Colormap, ConstantAndTwoValueMaps) {
  DepthMap d(4, 3, 2.0);
  d(1, 1) = 0.0;
  const auto rgb = io::colorize_depth(d);
  std::set<std::array<int, 3>> colors;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::array<int, 3> c{rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]};
    if (d[i] == 0)
      EXPECT_EQ(c, (std::array<int, 3>{0, 0, 0}));
    else
      colors.insert(c);
  }
  EXPECT_EQ(colors.size(), 1u);

  DepthMap two(4, 1, std::vector<double>{1.0, 3.0, 1.0, 3.0});
  const auto rgb2 = io::colorize_depth(two);
  std::set<std::array<int, 3>> c2;
  for (std::size_t i = 0; i < 4; ++i) c2.insert({rgb2[3 * i], rgb2[3 * i + 1], rgb2[3 * i + 2]});
  EXPECT_EQ(c2.size(), 2u);
  EXPECT_EQ((std::array<int, 3>{rgb2[0], rgb2[1], rgb2[2]}), (std::array<int, 3>{68, 1, 84}));
  EXPECT_EQ((std::array<int, 3>{rgb2[3], rgb2[4], rgb2[5]}), (std::array<int, 3>{253, 231, 37}));
}

TEST(Colormap, RampMatchesGoldenFile) {
  // 256 x 2 ramp over [1, 256] m with one invalid pixel per row.
  std::vector<double> d(256 * 2);
  for (int x = 0; x < 256; ++x) d[x] = d[256 + x] = 1.0 + x;
  d[17] = d[256 + 200] = 0.0;
  testutil::TempDir tmp("golden");
  io::render_depth_png(DepthMap(256, 2, d), tmp / "ramp.png");
  const auto got = io::read_png(tmp / "ramp.png");
  const auto golden = io::read_png(fs::path(SKETCHDEPTH_TEST_DATA) / "viridis_ramp.png");
  EXPECT_EQ(got.channels, 3);
  EXPECT_EQ(got.bit_depth, 8);
  EXPECT_EQ(got.samples, golden.samples);
}

TEST(ImagePng, RoundTripsEightBitValues) {
  testutil::TempDir tmp("image");
  std::vector<double> v(5 * 4 * 3);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>((i * 37) % 256) / 255.0;
  const ImageBuffer img(5, 4, 3, v);
  io::write_image_png(tmp / "i.png", img);
  EXPECT_EQ(io::read_image_png(tmp / "i.png"), img);
  const ImageBuffer gray(3, 2, 1, std::vector<double>{0, 1, 0.2, 0.4, 0.6, 0.8});
  io::write_image_png(tmp / "g.png", gray);
  const auto g = io::read_image_png(tmp / "g.png");
  EXPECT_EQ(g.channels(), 1);
  EXPECT_NEAR(g(2, 0), 0.2, 0.5 / 255);
}

TEST(MdrParamsFile, BitExactRoundTripWithSidecar) {
  testutil::TempDir tmp("params");
  const auto p = mdr::MdrParams::random(42);
  io::write_mdr_params(tmp / "p.bin", p);
  EXPECT_EQ(fs::file_size(tmp / "p.bin"), 8 * mdr::MdrParams::flat_size());
  const auto side = nlohmann::json::parse(read_text(io::params_sidecar(tmp / "p.bin")));
  EXPECT_EQ(side["count"].get<std::size_t>(), mdr::MdrParams::flat_size());
  EXPECT_EQ(side["tensors"].size(), mdr::MdrParams::layout().size());
  const auto back = io::read_mdr_params(tmp / "p.bin");
  for (std::size_t i = 0; i < p.flat().size(); ++i) ASSERT_TRUE(same_bits(back.flat()[i], p.flat()[i]));
  // First value is stored little-endian.
  const auto bytes = read_text(tmp / "p.bin");
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), std::bit_cast<std::uint64_t>(p.flat()[0]) & 0xff);
}

TEST(MdrParamsFile, Errors) {
  testutil::TempDir tmp("paramsbad");
  write_text(tmp / "short.bin", std::string(80, '\0'));
  EXPECT_THROW(io::read_mdr_params(tmp / "short.bin"), FormatError);
  auto p = mdr::MdrParams::zeros();
  io::write_mdr_params(tmp / "p.bin", p);
  write_text(io::params_sidecar(tmp / "p.bin"), R"({"format": "sketchdepth-mdr-params", "count": 12})");
  EXPECT_THROW(io::read_mdr_params(tmp / "p.bin"), FormatError);
  p.flat()[3] = std::nan("");
  io::write_mdr_params(tmp / "nan.bin", p);
  EXPECT_THROW(io::read_mdr_params(tmp / "nan.bin"), ParameterError);
}

TEST(SmallFormats, PoseIntrinsicsMeshRoundTrip) {
  testutil::TempDir tmp("small");
  const Pose pose(Eigen::AngleAxisd(0.3, Vec3(1, 2, 3).normalized()).toRotationMatrix(), Vec3(0.1, -2, 3.25));
  io::write_pose(tmp / "pose.json", pose);
  const auto pb = io::read_pose(tmp / "pose.json");
  EXPECT_EQ(pb.rotation(), pose.rotation());
  EXPECT_EQ(pb.translation(), pose.translation());
  const auto k = testutil::vga_intrinsics();
  io::write_intrinsics(tmp / "k.json", k);
  const auto kb = io::read_intrinsics(tmp / "k.json");
  EXPECT_EQ(kb.fx, k.fx);
  EXPECT_EQ(kb.cy, k.cy);
  EXPECT_EQ(kb.width, k.width);

  FeatureSet fs;
  fs.points = {{Vec2(0, 0), 1.0}, {Vec2(1, 0), 1.0}, {Vec2(0, 1), 1.0}, {Vec2(1, 1), 1.0}};
  fs.lines = {{Vec2(0, 0), 1.0, Vec2(1, 1), 1.0}};
  const auto mesh = cdt::triangulate(cdt::prepare_sites(fs));
  io::write_mesh(tmp / "m.json", mesh);
  const auto mb = io::read_mesh(tmp / "m.json");
  EXPECT_EQ(mb.facets, mesh.facets);
  ASSERT_EQ(mb.edges.size(), mesh.edges.size());
  for (std::size_t i = 0; i < mb.edges.size(); ++i) EXPECT_EQ(mb.edges[i].constrained, mesh.edges[i].constrained);

  write_text(tmp / "badpose.json", R"({"rotation": [1,0,0, 0,1,0, 0,0,2], "translation": [0,0,0]})");
  EXPECT_THROW(io::read_pose(tmp / "badpose.json"), FormatError);
  write_text(tmp / "badk.json", R"({"fx": 1, "fy": 1, "cx": 0, "cy": 0, "width": 4})");
  EXPECT_THROW(io::read_intrinsics(tmp / "badk.json"), FormatError);
}

TEST(Dataset, SynthDatasetRoundTrip) {
  testutil::TempDir tmp("dataset");
  const auto sf = io::scene_from_json(
      nlohmann::json::parse(R"({"preset": "box-wall", "width": 64, "height": 48, "seed": 3,
                                "features": {"points": 30, "lines": 4}})"));
  const auto m = io::write_synth_dataset(tmp.path, sf);
  const auto back = io::read_manifest(tmp.path);
  EXPECT_EQ(back.frames.size(), 1u);
  EXPECT_EQ(back.depth_unit_scale, 0.001);
  EXPECT_EQ(back.intrinsics.width, 64);
  const auto f = io::load_frame(tmp.path, back, 0);
  const auto r = synth::render(sf.scene);
  EXPECT_EQ(f.gt_depth->vector(), io::quantize_depth(r.depth).vector());
  EXPECT_EQ(f.features.points.size(), 30u);
  EXPECT_EQ(f.features.lines.size(), 4u);
  const auto j = nlohmann::json::parse(read_text(tmp / "manifest.json"));
  EXPECT_EQ(j["format"], "sketchdepth-dataset");
  EXPECT_EQ(j["version"], 1);
  EXPECT_EQ(j["frames"][0]["gt_depth"], "frame_000/depth.png");
}

TEST(Dataset, ManifestValidation) {
  testutil::TempDir tmp("manifest");
  const auto sf = io::scene_from_json(nlohmann::json::parse(R"({"preset": "fronto", "width": 16, "height": 12,
    "features": {"points": 5, "lines": 0},
    "views": [{"rotation": [1,0,0,0,1,0,0,0,1], "translation": [0,0,0]},
              {"rotation": [1,0,0,0,1,0,0,0,1], "translation": [0.1,0,0]}]})"));
  auto m = io::write_synth_dataset(tmp.path, sf);
  EXPECT_EQ(io::read_manifest(tmp.path).frames.size(), 2u);
  m.frames[1].id = 0;
  io::write_manifest(tmp.path, m);
  EXPECT_THROW(io::read_manifest(tmp.path), FormatError);
  m.frames[1].id = 1;
  m.frames[1].features = "nope.json";
  io::write_manifest(tmp.path, m);
  EXPECT_THROW(io::read_manifest(tmp.path), FormatError);
  m.frames[1].features = "frame_001/features.json";
  m.version = 9;
  io::write_manifest(tmp.path, m);
  EXPECT_THROW(io::read_manifest(tmp.path), FormatError);
}

TEST(SceneJson, ExplicitSceneAndErrors) {
  const auto sf = io::scene_from_json(nlohmann::json::parse(R"({
    "camera": {"fx": 50, "fy": 50, "cx": 15.5, "cy": 11.5, "width": 32, "height": 24},
    "planes": [{"normal": [0, 0, 2], "offset": 4}],
    "boxes": [{"center": [0, 0, 2], "size": [0.5, 0.5, 0.5]}],
    "seed": 5})"));
  EXPECT_EQ(sf.scene.planes[0].normal, Vec3(0, 0, 1));
  EXPECT_EQ(sf.scene.boxes.size(), 1u);
  EXPECT_EQ(sf.views.size(), 1u);
  EXPECT_EQ(synth::render(sf.scene).depth(16, 12), 1.75);
  EXPECT_THROW(io::scene_from_json(nlohmann::json::parse(R"({"preset": "cathedral"})")), SpecError);
  EXPECT_THROW(io::scene_from_json(nlohmann::json::parse(R"({"planes": []})")), FormatError);
}
