#include <gtest/gtest.h>

#include <random>

#include "sketchdepth/mdr.hpp"
#include "test_util.hpp"

using namespace sketchdepth;
using namespace sketchdepth::mdr;

namespace {

using Map = std::vector<std::vector<std::vector<double>>>;  // [channel][row][col]

Map zeros(int c, int h, int w) { return Map(c, std::vector<std::vector<double>>(h, std::vector<double>(w, 0.0))); }

/// Straightforward reference network: nested vectors, direct formulas.
struct RefNet {
  const std::vector<double>& p;
  std::size_t cursor = 0;

  double take() { return p[cursor++]; }

  Map conv(const Map& x, int out) {
    const int in = static_cast<int>(x.size()), h = static_cast<int>(x[0].size()), w = static_cast<int>(x[0][0].size());
    std::vector<double> wt(static_cast<std::size_t>(out) * in * 9);
    for (auto& v : wt) v = take();
    std::vector<double> b(out);
    for (auto& v : b) v = take();
    Map y = zeros(out, h, w);
    for (int o = 0; o < out; ++o)
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          double s = b[o];
          for (int i = 0; i < in; ++i)
            for (int ky = -1; ky <= 1; ++ky)
              for (int kx = -1; kx <= 1; ++kx) {
                const int rr = r + ky, cc = c + kx;
                if (rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
                s += wt[((o * in + i) * 3 + ky + 1) * 3 + kx + 1] * x[i][rr][cc];
              }
          y[o][r][c] = s;
        }
    return y;
  }
  static Map act(Map x) {
    for (auto& ch : x)
      for (auto& row : ch)
        for (auto& v : row) v = v > 0 ? v : std::exp(v) - 1;
    return x;
  }
  static Map pool(const Map& x) {
    Map y;
    for (const auto& ch : x) {
      const int h = static_cast<int>(ch.size()) / 2, w = static_cast<int>(ch[0].size()) / 2;
      Map mx = zeros(2, h, w);
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          const double a = ch[2 * r][2 * c], b = ch[2 * r][2 * c + 1], d = ch[2 * r + 1][2 * c], e = ch[2 * r + 1][2 * c + 1];
          mx[0][r][c] = std::max({a, b, d, e});
          mx[1][r][c] = std::min({a, b, d, e});
        }
      y.push_back(mx[0]);
      y.push_back(mx[1]);
    }
    return y;
  }
  static Map up(const Map& x) {
    const int h = static_cast<int>(x[0].size()), w = static_cast<int>(x[0][0].size());
    Map y = zeros(static_cast<int>(x.size()), 2 * h, 2 * w);
    auto src = [](int o, int n) { return std::min(std::max(o / 2.0 - 0.25, 0.0), n - 1.0); };
    for (std::size_t ch = 0; ch < x.size(); ++ch)
      for (int r = 0; r < 2 * h; ++r)
        for (int c = 0; c < 2 * w; ++c) {
          const double sy = src(r, h), sx = src(c, w);
          const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
          const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
          const double fy = sy - y0, fx = sx - x0;
          y[ch][r][c] = (1 - fy) * (1 - fx) * x[ch][y0][x0] + (1 - fy) * fx * x[ch][y0][x1] +
                        fy * (1 - fx) * x[ch][y1][x0] + fy * fx * x[ch][y1][x1];
        }
    return y;
  }
  static Map cat(std::initializer_list<Map> parts) {
    Map y;
    for (const auto& m : parts) y.insert(y.end(), m.begin(), m.end());
    return y;
  }
};

/// zfill is passed in so the reference only covers the network itself.
std::vector<double> reference_forward(const ImageBuffer& img, const std::vector<double>& zfill, const ValidMask& mask,
                                      const MdrParams& params) {
  const int w = img.width(), h = img.height();
  Map im = zeros(4, h, w), dp = zeros(2, h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      for (int k = 0; k < 3; ++k) im[k][r][c] = img(c, r, k);
      im[3][r][c] = dp[1][r][c] = mask(c, r);
      dp[0][r][c] = zfill[r * w + c];
    }
  RefNet net{params.flat()};
  const Map i1 = RefNet::pool(RefNet::act(net.conv(im, 4)));
  const Map i2 = RefNet::pool(RefNet::act(net.conv(i1, 8)));
  const Map d1 = RefNet::pool(RefNet::act(net.conv(dp, 4)));
  const Map d2 = RefNet::pool(RefNet::act(net.conv(d1, 8)));
  const Map f1 = RefNet::up(RefNet::act(net.conv(RefNet::cat({i2, d2}), 16)));
  const Map f2 = RefNet::up(RefNet::act(net.conv(RefNet::cat({f1, i1, d1}), 8)));
  const Map hd = net.conv(f2, 1);
  EXPECT_EQ(net.cursor, params.flat().size());
  std::vector<double> z;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) z.push_back(std::log(1 + std::exp(hd[0][r][c] + zfill[r * w + c])));
  return z;
}

MdrInputs random_inputs(std::uint64_t seed, int w = 16, int h = 16, double coverage = 0.6) {
  std::mt19937_64 rng(seed);
  std::vector<double> img(static_cast<std::size_t>(w) * h * 3), z(static_cast<std::size_t>(w) * h, 0.0);
  for (auto& v : img) v = testutil::uniform(rng, 0, 1);
  for (auto& v : z)
    if (testutil::uniform(rng, 0, 1) < coverage) v = testutil::uniform(rng, 1, 4);
  z[0] = 2.0;
  DepthMap zm(w, h, z);
  return {ImageBuffer(w, h, 3, img), zm, ValidMask::from_depth(zm)};
}

}  // namespace

TEST(ParallelPool, Constant) {
  Tensor x(2, 4, 6, 5.0);
  const auto y = parallel_pool(x);
  EXPECT_EQ(y.c, 4);
  EXPECT_EQ(y.h, 2);
  EXPECT_EQ(y.w, 3);
  for (double v : y.v) EXPECT_EQ(v, 5.0);
}

TEST(ParallelPool, TwoByTwo) {
  Tensor x(1, 2, 2);
  x.v = {1, 2, 3, 4};
  const auto y = parallel_pool(x);
  EXPECT_EQ(y.at(0, 0, 0), 4);
  EXPECT_EQ(y.at(1, 0, 0), 1);
}

TEST(ParallelPool, OddDimsRejected) {
  EXPECT_THROW(parallel_pool(Tensor(1, 3, 4)), ShapeError);
  EXPECT_THROW(parallel_pool(Tensor(1, 4, 5)), ShapeError);
}

TEST(ParallelPool, RandomMapsAgainstWindowScan) {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x(3, 6, 8);
    for (auto& v : x.v) v = testutil::uniform(rng, -5, 5);
    const auto y = parallel_pool(x);
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < 3; ++r)
        for (int q = 0; q < 4; ++q) {
          double mx = -1e300, mn = 1e300;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              mx = std::max(mx, x.at(c, 2 * r + dy, 2 * q + dx));
              mn = std::min(mn, x.at(c, 2 * r + dy, 2 * q + dx));
            }
          ASSERT_EQ(y.at(2 * c, r, q), mx);
          ASSERT_EQ(y.at(2 * c + 1, r, q), mn);
          ASSERT_GE(y.at(2 * c, r, q), y.at(2 * c + 1, r, q));
        }
  }
}

TEST(MdrParams, LayoutAndFlatRoundTrip) {
  EXPECT_EQ(MdrParams::layout().size(), 14u);
  EXPECT_EQ(MdrParams::flat_size(), 8401u);
  EXPECT_EQ(MdrParams::layout().front().name, "img_conv1.w");
  EXPECT_EQ(MdrParams::layout().back().name, "head.b");
  const auto p = MdrParams::random(3);
  const auto q = MdrParams::from_flat(p.flat());
  EXPECT_EQ(p, q);
  EXPECT_THROW(MdrParams::from_flat(std::vector<double>(10)), ParameterError);
  // Initialization bound 1/sqrt(fan_in) per layer.
  for (std::size_t t = 0; t < MdrParams::layout().size(); ++t) {
    const double bound = 1.0 / std::sqrt(kConvShapes[t / 2].in * 9.0);
    for (double v : p.tensor(t)) ASSERT_LE(std::abs(v), bound);
  }
  EXPECT_EQ(MdrParams::random(3), p);
  EXPECT_NE(MdrParams::random(4), p);
}

TEST(MdrForward, ShapeAndPositivity) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto in = random_inputs(seed, 20, 12);
    const auto out = mdr_forward(in.image, in.z_mesh, in.mask, MdrParams::random(seed));
    EXPECT_EQ(out.z_refined.width(), 20);
    EXPECT_EQ(out.z_refined.height(), 12);
    for (double v : out.z_refined.vector()) ASSERT_GT(v, 0);
  }
}

TEST(MdrForward, ZeroNetworkIsSoftplusOfFilledDepth) {
  std::vector<double> z(16 * 16, 0.0);
  for (int y = 4; y < 12; ++y)
    for (int x = 4; x < 12; ++x) z[y * 16 + x] = 2.5;
  const DepthMap zm(16, 16, z);
  const auto out = mdr_forward(ImageBuffer(16, 16, 3, 0.4), zm, ValidMask::from_depth(zm), MdrParams::zeros());
  const double expected = std::log1p(std::exp(2.5));
  for (double v : out.z_refined.vector()) EXPECT_NEAR(v, expected, 1e-12);
}

TEST(MdrForward, MatchesReferenceImplementation) {
  for (std::uint64_t seed = 10; seed < 13; ++seed) {
    const auto in = random_inputs(seed);
    const auto params = MdrParams::random(seed);
    const auto out = mdr_forward(in.image, in.z_mesh, in.mask, params);
    const auto ref = reference_forward(in.image, nearest_valid_fill(in.z_mesh).vector(), in.mask, params);
    std::mt19937_64 rng(seed);
    double loss = 0, loss_ref = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      ASSERT_NEAR(out.z_refined[i], ref[i], 1e-10);
      const double c = testutil::uniform(rng, -1, 1);
      loss += c * out.z_refined[i];
      loss_ref += c * ref[i];
    }
    EXPECT_NEAR(loss, loss_ref, 1e-10);
  }
}

TEST(MdrForward, FullCoverageAtTenPercentMask) {
  const auto in = random_inputs(20, 32, 32, 0.1);
  const auto out = mdr_forward(in.image, in.z_mesh, in.mask, MdrParams::random(20));
  EXPECT_EQ(out.z_refined.valid_count(), 32u * 32u);
}

TEST(MdrForward, MaskChannelChangesOutput) {
  for (std::uint64_t seed = 30; seed < 35; ++seed) {
    const auto in = random_inputs(seed);
    const auto params = MdrParams::random(seed);
    std::vector<std::uint8_t> flipped(in.mask.vector());
    for (std::size_t i = 0; i < flipped.size(); i += 3) flipped[i] ^= 1;
    const auto a = mdr_forward(in.image, in.z_mesh, in.mask, params).z_refined;
    const auto b = mdr_forward(in.image, in.z_mesh, ValidMask(16, 16, flipped), params).z_refined;
    std::size_t differ = 0;
    for (std::size_t i = 0; i < a.size(); ++i) differ += a[i] != b[i];
    EXPECT_GT(differ, 0u);
  }
}

TEST(MdrForward, Errors) {
  const auto in = random_inputs(40, 18, 16);
  EXPECT_THROW(mdr_forward(in.image, in.z_mesh, in.mask, MdrParams::zeros()), ShapeError);
  const auto ok = random_inputs(41);
  auto bad = MdrParams::zeros();
  bad.flat()[17] = std::nan("");
  EXPECT_THROW(mdr_forward(ok.image, ok.z_mesh, ok.mask, bad), ParameterError);
  EXPECT_THROW(mdr_forward(ok.image, ok.z_mesh, ValidMask(8, 8), MdrParams::zeros()), ShapeError);
}

TEST(MdrBackward, Linearity) {
  const auto in = random_inputs(50);
  const auto params = MdrParams::random(50);
  const auto out = mdr_forward(in.image, in.z_mesh, in.mask, params);
  const auto g0 = mdr_backward(out.acts, Grid<double>(16, 16, 0.0), params);
  for (double v : g0) EXPECT_EQ(v, 0.0);
  std::mt19937_64 rng(50);
  Grid<double> up(16, 16), up2(16, 16);
  for (std::size_t i = 0; i < up.size(); ++i) up[i] = testutil::uniform(rng, -1, 1), up2[i] = 2 * up[i];
  const auto g1 = mdr_backward(out.acts, up, params), g2 = mdr_backward(out.acts, up2, params);
  for (std::size_t i = 0; i < g1.size(); ++i) ASSERT_NEAR(g2[i], 2 * g1[i], 1e-12 * (1 + std::abs(g1[i])));
}

TEST(MdrBackward, StaleActivationsRejected) {
  const auto in = random_inputs(51);
  auto params = MdrParams::random(51);
  const auto out = mdr_forward(in.image, in.z_mesh, in.mask, params);
  params.flat()[100] += 1e-3;
  EXPECT_THROW(mdr_backward(out.acts, Grid<double>(16, 16, 1.0), params), ContractError);
  EXPECT_THROW(mdr_backward(out.acts, Grid<double>(8, 16, 1.0), MdrParams::random(51)), ShapeError);
}

TEST(GradCheck, HealthyOnFiveSeeds) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = grad_check_report(MdrParams::random(100 + seed), random_inputs(200 + seed), 1e-4, seed);
    EXPECT_LT(r.max_rel_error, 1e-3) << "seed " << seed;
    EXPECT_GE(r.samples, 200u);
  }
}

TEST(GradCheck, ZeroParams) {
  EXPECT_LT(grad_check(MdrParams::zeros(), random_inputs(60), 1e-4, 60), 1e-3);
}

TEST(GradCheck, DetectsCorruptedBiasGradient) {
  const BackwardFn corrupted = [](const MdrActivations& a, const Grid<double>& g, const MdrParams& p) {
    auto grad = mdr_backward(a, g, p);
    grad[MdrParams::layout().back().offset] *= -1;  // head bias
    return grad;
  };
  EXPECT_GT(grad_check(MdrParams::random(61), random_inputs(61), 1e-4, 61, 200, corrupted), 1e-1);
}

TEST(Train, ObjectiveDecreasesOnSmallFrame) {
  auto in = random_inputs(70, 16, 16, 0.5);
  TrainingFrame frame{in.image, in.z_mesh, in.mask, in.z_mesh};
  auto params = MdrParams::random(70);
  const auto log = train(params, frame, 20, 1e-3);
  EXPECT_EQ(log.objective.size(), 21u);
  EXPECT_LT(log.last(), log.initial());
}
