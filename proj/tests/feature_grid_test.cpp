#include <gtest/gtest.h>

#include <cmath>

#include "ndgi/feature_grid.hpp"
#include "ndgi/hybrid.hpp"
#include "ndgi/random.hpp"

using namespace ndgi;

namespace {

// Straightforward interpolators written from the definition: texel i covers
// [i/n, (i+1)/n), its center sits at (i + 0.5)/n, coordinates clamp to the
// outermost centers.
double hat_weight(double coord, int n, int i) {
  const double p = std::clamp(coord * n - 0.5, 0.0, static_cast<double>(n - 1));
  return std::max(0.0, 1.0 - std::abs(p - i));
}

double ref_bilinear(const Grid2D<double>& g, double x, double y, int c) {
  double s = 0.0;
  for (int j = 0; j < g.height; ++j) {
    for (int i = 0; i < g.width; ++i) s += hat_weight(x, g.width, i) * hat_weight(y, g.height, j) * g.at(i, j, c);
  }
  return s;
}

double ref_trilinear(const Grid3D<double>& g, double x, double y, double t, int c) {
  double s = 0.0;
  for (int k = 0; k < g.depth; ++k) {
    for (int j = 0; j < g.height; ++j) {
      for (int i = 0; i < g.width; ++i) {
        s += hat_weight(x, g.width, i) * hat_weight(y, g.height, j) * hat_weight(t, g.depth, k) *
             g.at(i, j, k, c);
      }
    }
  }
  return s;
}

Grid2D<double> random_grid2(Rng& rng, int w, int h, int c) {
  Grid2D<double> g(w, h, c);
  for (auto& v : g.data) v = uniform01(rng);
  return g;
}

Grid3D<double> random_grid3(Rng& rng, int w, int h, int d, int c) {
  Grid3D<double> g(w, h, d, c);
  for (auto& v : g.data) v = uniform01(rng);
  return g;
}

}  // namespace

TEST(Sample2D, TexelCenterReturnsTheTexel) {
  Rng rng(1);
  const auto g = random_grid2(rng, 5, 4, 3);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 5; ++x) {
      const auto s = sample_2d(g, (x + 0.5) / 5, (y + 0.5) / 4);
      for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(s[c], g.at(x, y, c));
    }
  }
}

TEST(Sample2D, MidpointIsTheAverage) {
  Rng rng(2);
  const auto g = random_grid2(rng, 6, 3, 2);
  const auto s = sample_2d(g, 3.0 / 6, 1.5 / 3);  // between x = 2 and x = 3 at row 1
  for (int c = 0; c < 2; ++c) EXPECT_NEAR(s[c], 0.5 * (g.at(2, 1, c) + g.at(3, 1, c)), 1e-15);
}

TEST(Sample2D, MatchesBruteForceOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 1 + static_cast<int>(uniform_index(rng, 9));
    const int h = 1 + static_cast<int>(uniform_index(rng, 9));
    const auto g = random_grid2(rng, w, h, 4);
    for (int q = 0; q < 50; ++q) {
      const double x = uniform01(rng), y = uniform01(rng);
      const auto s = sample_2d(g, x, y);
      for (int c = 0; c < 4; ++c) ASSERT_NEAR(s[c], ref_bilinear(g, x, y, c), 1e-6);
      // Convex combination of stored values.
      for (int c = 0; c < 4; ++c) {
        ASSERT_GE(s[c], 0.0);
        ASSERT_LE(s[c], 1.0);
      }
    }
  }
}

TEST(Sample3D, TexelCenterAndDegenerateDepth) {
  Rng rng(4);
  auto g = random_grid3(rng, 4, 4, 3, 2);
  const auto s = sample_3d(g, 2.5 / 4, 1.5 / 4, 0.5 / 3);
  for (int c = 0; c < 2; ++c) EXPECT_DOUBLE_EQ(s[c], g.at(2, 1, 0, c));

  // Identical slices: any t between them gives that slice's bilinear result.
  for (int z = 1; z < 3; ++z) {
    for (std::size_t i = 0; i < g.slice_size(); ++i) g.slice(z)[i] = g.slice(0)[i];
  }
  Grid2D<double> slice(4, 4, 2);
  std::copy(g.slice(0).begin(), g.slice(0).end(), slice.data.begin());
  const auto a = sample_3d(g, 0.3, 0.7, 0.5);
  const auto b = sample_2d(slice, 0.3, 0.7);
  for (int c = 0; c < 2; ++c) EXPECT_NEAR(a[c], b[c], 1e-15);
}

TEST(Sample3D, MatchesBruteForceOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const int w = 1 + static_cast<int>(uniform_index(rng, 6));
    const int h = 1 + static_cast<int>(uniform_index(rng, 6));
    const int d = 1 + static_cast<int>(uniform_index(rng, 6));
    const auto g = random_grid3(rng, w, h, d, 3);
    for (int q = 0; q < 50; ++q) {
      const double x = uniform01(rng), y = uniform01(rng), t = uniform01(rng);
      const auto s = sample_3d(g, x, y, t);
      for (int c = 0; c < 3; ++c) ASSERT_NEAR(s[c], ref_trilinear(g, x, y, t, c), 1e-6);
    }
  }
}

TEST(ReconstructBC, EndpointInterpolation) {
  BCBlockGrid<double> p(4, 4, 2);
  p.e1(0)[0] = 0.2, p.e1(0)[1] = 0.4;
  p.e2(0)[0] = 0.6, p.e2(0)[1] = 0.8;
  p.w(0)[0] = 0.25;
  p.w(0)[1] = 0.0;
  p.w(0)[2] = 1.0;
  p.w(0)[3] = 0.5;
  const auto g = reconstruct_bc(p);
  EXPECT_NEAR(g.at(0, 0, 0), 0.3, 1e-15);
  EXPECT_NEAR(g.at(0, 0, 1), 0.5, 1e-15);
  EXPECT_EQ(g.at(1, 0, 0), 0.2);
  EXPECT_EQ(g.at(2, 0, 1), 0.8);
  EXPECT_NEAR(g.at(3, 0, 0), 0.4, 1e-15);

  BCBlockGrid<double> q(4, 4, 1);
  q.e1(0)[0] = 0.0;
  q.e2(0)[0] = 1.0;
  for (int i = 0; i < 16; ++i) q.w(0)[i] = 0.5;
  EXPECT_EQ(reconstruct_bc(q).at(2, 3, 0), 0.5);
}

TEST(ReconstructBC, OutputStaysInUnitRange) {
  Rng rng(6);
  BCBlockGrid<double> p(8, 8, 4);
  for (auto& v : p.endpoints) v = uniform(rng, -0.5, 1.5);
  for (auto& v : p.weights) v = uniform(rng, -0.5, 1.5);
  for (double v : reconstruct_bc(p).data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(BackwardSample, TexelCenterIsADelta) {
  Grid2D<double> grad(4, 3, 1);
  const double up = 1.0;
  backward_sample_2d(grad, 1.5 / 4, 2.5 / 3, std::span<const double>(&up, 1));
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) EXPECT_EQ(grad.at(x, y, 0), (x == 1 && y == 2) ? 1.0 : 0.0);
  }
}

TEST(BackwardSample, MatchesFiniteDifferences2D) {
  Rng rng(7);
  const double h = 1e-3;
  for (int trial = 0; trial < 10; ++trial) {
    auto g = random_grid2(rng, 5, 4, 3);
    const double x = uniform01(rng), y = uniform01(rng);
    std::vector<double> up(3);
    for (auto& u : up) u = uniform(rng, -1, 1);
    auto loss = [&](const Grid2D<double>& gg) {
      const auto s = sample_2d(gg, x, y);
      return s[0] * up[0] + s[1] * up[1] + s[2] * up[2];
    };
    Grid2D<double> grad(5, 4, 3);
    backward_sample_2d(grad, x, y, std::span<const double>(up));
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const double keep = g.data[i];
      g.data[i] = keep + h;
      const double lp = loss(g);
      g.data[i] = keep - h;
      const double lm = loss(g);
      g.data[i] = keep;
      const double fd = (lp - lm) / (2 * h);
      ASSERT_LT(std::abs(grad.data[i] - fd) / std::max(1.0, std::abs(grad.data[i])), 1e-4);
    }
  }
}

TEST(BackwardSample, MatchesFiniteDifferences3D) {
  Rng rng(8);
  const double h = 1e-3;
  for (int trial = 0; trial < 10; ++trial) {
    auto g = random_grid3(rng, 3, 4, 5, 2);
    const double x = uniform01(rng), y = uniform01(rng), t = uniform01(rng);
    const double up[2] = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
    auto loss = [&](const Grid3D<double>& gg) {
      const auto s = sample_3d(gg, x, y, t);
      return s[0] * up[0] + s[1] * up[1];
    };
    Grid3D<double> grad(3, 4, 5, 2);
    backward_sample_3d(grad, x, y, t, std::span<const double>(up, 2));
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const double keep = g.data[i];
      g.data[i] = keep + h;
      const double lp = loss(g);
      g.data[i] = keep - h;
      const double lm = loss(g);
      g.data[i] = keep;
      const double fd = (lp - lm) / (2 * h);
      ASSERT_LT(std::abs(grad.data[i] - fd) / std::max(1.0, std::abs(grad.data[i])), 1e-4);
    }
  }
}

TEST(BackwardBC, ChainRuleMatchesFiniteDifferences) {
  Rng rng(9);
  const double h = 1e-3;
  // Interior values keep the clamp inactive, where the derivative is defined.
  BCBlockGrid<double> p(8, 4, 3);
  for (auto& v : p.endpoints) v = uniform(rng, 0.05, 0.95);
  for (auto& v : p.weights) v = uniform(rng, 0.05, 0.95);
  std::vector<double> up(static_cast<std::size_t>(8 * 4 * 3));
  for (auto& u : up) u = uniform(rng, -1, 1);
  auto loss = [&](const BCBlockGrid<double>& q) {
    const auto g = reconstruct_bc(q);
    double s = 0.0;
    for (std::size_t i = 0; i < up.size(); ++i) s += g.data[i] * up[i];
    return s;
  };
  BCBlockGrid<double> grad(8, 4, 3);
  backward_bc(p, std::span<const double>(up), 3, 0, grad);

  // Closed forms for one texel: df/de1 = 1 - w, df/dw = e2 - e1.
  {
    BCBlockGrid<double> one(4, 4, 1), g1(4, 4, 1);
    one.e1(0)[0] = 0.3, one.e2(0)[0] = 0.7, one.w(0)[5] = 0.25;
    std::vector<double> delta(16, 0.0);
    delta[5] = 1.0;
    backward_bc(one, std::span<const double>(delta), 1, 0, g1);
    EXPECT_NEAR(g1.e1(0)[0], 0.75, 1e-12);
    EXPECT_NEAR(g1.e2(0)[0], 0.25, 1e-12);
    EXPECT_NEAR(g1.w(0)[5], 0.4, 1e-12);
  }

  auto check = [&](std::vector<double>& params, const std::vector<double>& analytic) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double keep = params[i];
      params[i] = keep + h;
      const double lp = loss(p);
      params[i] = keep - h;
      const double lm = loss(p);
      params[i] = keep;
      const double fd = (lp - lm) / (2 * h);
      ASSERT_LT(std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i])), 1e-4) << i;
    }
  };
  check(p.endpoints, grad.endpoints);
  check(p.weights, grad.weights);
}

TEST(HybridMaps, GatherConcatenatesInDecoderOrder) {
  ModelLayout l;
  l.f3d = {4, 4, 3, 4};
  l.f_uv = {4, 4, 1, 4};
  l.f_ut = {8, 6, 1, 2};
  l.f_vt = {8, 6, 1, 2};
  HybridFeatureMaps<double> m(l);
  Rng rng(10);
  for (auto* v : {&m.f3d.data, &m.f_uv.data, &m.f_ut.data, &m.f_vt.data}) {
    for (auto& x : *v) x = uniform01(rng);
  }
  std::vector<double> out(static_cast<std::size_t>(l.input_width()));
  const double u = 0.3, v = 0.8, t = 0.45;
  gather_features(m, u, v, t, std::span<double>(out));
  const auto a = sample_3d(m.f3d, u, v, t);
  const auto b = sample_2d(m.f_uv, u, v);
  const auto c = sample_2d(m.f_ut, u, t);
  const auto d = sample_2d(m.f_vt, v, t);
  const auto e = encode_time(t);
  std::vector<double> want;
  for (const auto* part : {&a, &b, &c, &d}) want.insert(want.end(), part->begin(), part->end());
  want.insert(want.end(), e.begin(), e.end());
  ASSERT_EQ(out.size(), want.size());
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], want[i]);
}
