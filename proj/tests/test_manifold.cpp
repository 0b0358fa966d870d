#include <gtest/gtest.h>

#include <cmath>

#include "mext/geometry.hpp"
#include "mext/manifold.hpp"

using namespace mext;

namespace {
Vec v2(double a, double b) {
  Vec x(2);
  x << a, b;
  return x;
}
Vec v3(double a, double b, double c) {
  Vec x(3);
  x << a, b, c;
  return x;
}
void expect_orthonormal(const Mat& P) {
  EXPECT_LT((P.transpose() * P - Mat::Identity(P.cols(), P.cols())).norm(), 1e-10);
}
}  // namespace

TEST(Manifold, Descriptors) {
  auto c = Manifold::circle(2.0);
  EXPECT_EQ(c.intrinsic_dim(), 1);
  EXPECT_EQ(c.ambient_dim(), 2);
  EXPECT_DOUBLE_EQ(c.reach(), 2.0);
  auto s = Manifold::sphere(2, 1.5);
  EXPECT_EQ(s.ambient_dim(), 3);
  EXPECT_DOUBLE_EQ(s.reach(), 1.5);
  auto p = Manifold::product(c, s);
  EXPECT_EQ(p.intrinsic_dim(), 3);
  EXPECT_EQ(p.ambient_dim(), 5);
  EXPECT_DOUBLE_EQ(p.reach(), 1.5);
  EXPECT_THROW(Manifold::sphere(3), Unsupported);
}

TEST(TangentFrame, CircleAtAngleZero) {
  auto f = Manifold::circle().tangent_frame(v2(1, 0));
  ASSERT_EQ(f.columns.rows(), 2);
  ASSERT_EQ(f.columns.cols(), 1);
  EXPECT_NEAR(std::abs(f.columns(1, 0)), 1.0, 1e-14);
  EXPECT_NEAR(f.columns(0, 0), 0.0, 1e-14);
}

TEST(TangentFrame, SphereNorthPole) {
  auto f = Manifold::sphere(2).tangent_frame(v3(0, 0, 1));
  expect_orthonormal(f.columns);
  EXPECT_LT((f.columns.transpose() * v3(0, 0, 1)).norm(), 1e-12);
}

TEST(TangentFrame, SphereGeneric) {
  auto S = Manifold::sphere(2);
  for (const auto& x : S.sample(50)) {
    auto f = S.tangent_frame(x);
    expect_orthonormal(f.columns);
    EXPECT_LT((f.columns.transpose() * x).norm(), 1e-10);
  }
}

TEST(TangentFrame, ProductBlockDiagonal) {
  auto c = Manifold::circle();
  auto p = Manifold::product(c, c);
  Vec x(4);
  x << std::cos(0.3), std::sin(0.3), std::cos(2.0), std::sin(2.0);
  auto f = p.tangent_frame(x);
  expect_orthonormal(f.columns);
  EXPECT_EQ(f.columns.block(2, 0, 2, 1).norm(), 0.0);
  EXPECT_EQ(f.columns.block(0, 1, 2, 1).norm(), 0.0);
  auto f1 = c.tangent_frame(x.head(2));
  EXPECT_LT((f.columns.block(0, 0, 2, 1) - f1.columns).norm(), 1e-14);
}

TEST(TangentFrame, OffManifold) {
  EXPECT_THROW(Manifold::circle().tangent_frame(v2(1.1, 0)), Error);
  EXPECT_THROW(Manifold::circle().tangent_frame(v3(1, 0, 0)), Error);
}

TEST(TangentFrame, ContinuousAlongCirclePath) {
  auto c = Manifold::circle();
  Mat prev = c.tangent_frame(v2(1, 0)).columns;
  for (int k = 1; k <= 1000; ++k) {
    double t = 2 * M_PI * k / 1000;
    Mat cur = c.tangent_frame(v2(std::cos(t), std::sin(t))).columns;
    EXPECT_LT((cur - prev).norm(), 0.01);
    prev = cur;
  }
}

TEST(Hausdorff, CircleLength) {
  auto one = [](const Vec&) { return 1.0; };
  EXPECT_NEAR(hausdorff_integral(Manifold::circle(), one, 1024), 2 * M_PI, 1e-6);
}

TEST(Hausdorff, SphereArea) {
  auto one = [](const Vec&) { return 1.0; };
  EXPECT_NEAR(hausdorff_integral(Manifold::sphere(2), one, 512), 4 * M_PI, 1e-3);
  EXPECT_NEAR(hausdorff_integral(Manifold::sphere(2, 2.0), one, 512), 16 * M_PI, 16 * M_PI * 1e-3);
}

TEST(Hausdorff, CosSquaredOnRadiusTwo) {
  // 2 * int_0^{2pi} cos^2 = 2pi
  auto f = [](const Vec& x) { return std::pow(x(0) / 2.0, 2); };
  EXPECT_NEAR(hausdorff_integral(Manifold::circle(2.0), f, 256), 2 * M_PI, 1e-10);
}

TEST(Hausdorff, ConvergesInResolution) {
  // int over the unit sphere of z^2 = 4pi/3
  auto f = [](const Vec& x) { return x(2) * x(2); };
  double e1 = std::abs(hausdorff_integral(Manifold::sphere(2), f, 16) - 4 * M_PI / 3);
  double e2 = std::abs(hausdorff_integral(Manifold::sphere(2), f, 64) - 4 * M_PI / 3);
  EXPECT_LT(e2, e1);
}

TEST(Hausdorff, ProductFubini) {
  auto one = [](const Vec&) { return 1.0; };
  auto c = Manifold::circle(1.5);
  auto s = Manifold::sphere(2);
  double v = hausdorff_integral(Manifold::product(c, s), one, 64);
  double expect = hausdorff_integral(c, one, 64) * hausdorff_integral(s, one, 64);
  EXPECT_NEAR(v / expect, 1.0, 5e-3);
  EXPECT_NEAR(v / (3 * M_PI * 4 * M_PI), 1.0, 5e-3);
}

TEST(Hausdorff, TorusAndBox) {
  auto one = [](const Vec&) { return 1.0; };
  EXPECT_NEAR(hausdorff_integral(Manifold::flat_torus({2.0, 3.0}), one, 32), 6.0, 1e-10);
  EXPECT_NEAR(hausdorff_integral(Manifold::interval_product({{0, 2}, {-1, 1}}), one, 16), 4.0, 1e-12);
}

TEST(Hausdorff, KnownVolumesAt512) {
  auto one = [](const Vec&) { return 1.0; };
  for (double rho : {0.5, 1.0, 3.0}) {
    EXPECT_NEAR(hausdorff_integral(Manifold::circle(rho), one, 512) / (2 * M_PI * rho), 1.0, 1e-3);
    EXPECT_NEAR(hausdorff_integral(Manifold::sphere(2, rho), one, 512) / (4 * M_PI * rho * rho), 1.0, 1e-3);
  }
}

TEST(SphereGrid, CircleAngles) {
  auto g = sphere_grid(2, 4);
  ASSERT_EQ(g.size(), 4u);
  EXPECT_LT((g[0] - v2(1, 0)).norm(), 1e-15);
  EXPECT_LT((g[1] - v2(0, 1)).norm(), 1e-15);
  EXPECT_LT((g[2] - v2(-1, 0)).norm(), 1e-15);
  EXPECT_LT((g[3] - v2(0, -1)).norm(), 1e-15);
}

TEST(SphereGrid, Fibonacci100) {
  auto g = sphere_grid(3, 100);
  ASSERT_EQ(g.size(), 100u);
  for (auto& v : g) EXPECT_NEAR(v.norm(), 1.0, 1e-12);
  EXPECT_LT(max_nn_gap(g), 0.5);
}

TEST(SphereGrid, UnitNormsAndErrors) {
  for (auto& v : sphere_grid(2, 37)) EXPECT_NEAR(v.norm(), 1.0, 1e-12);
  EXPECT_EQ(sphere_grid(1, 5).size(), 2u);
  EXPECT_THROW(sphere_grid(4, 10), Unsupported);
}

TEST(SphereGrid, CoveringShrinks) {
  auto S = Manifold::sphere(2);
  auto ref = S.sample(4000);
  double prev = 10;
  for (int res : {50, 200, 800}) {
    auto g = sphere_grid(3, res);
    double cov = 0;
    for (auto& x : ref) {
      double d;
      nearest_index(g, x, &d);
      cov = std::max(cov, d);
    }
    EXPECT_LT(cov, prev);
    prev = cov;
  }
}
