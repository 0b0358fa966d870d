#include <gtest/gtest.h>

#include <cmath>

#include "mext/geometry.hpp"

using namespace mext;

TEST(EpsilonNet, CircleNetsCertify) {
  auto M = Manifold::circle();
  for (double eps : {0.4, 0.2, 0.1, 0.05}) {
    auto net = build_epsilon_net(M, eps, 10000);
    auto cert = certify_net(net, net.candidates);
    EXPECT_TRUE(cert.covering_ok) << eps;
    EXPECT_TRUE(cert.packing_ok) << eps;
    EXPECT_EQ(cert.n_reference, 10000u);
  }
}

TEST(EpsilonNet, ReachRefusal) {
  auto M = Manifold::circle();
  // eps = pi/2 and 2pi both violate eps < reach/2
  for (double eps : {M_PI / 2, 2 * M_PI}) {
    try {
      build_epsilon_net(M, eps, 10000);
      FAIL();
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find("reach"), std::string::npos);
    }
  }
}

TEST(EpsilonNet, CoarseCandidates) { EXPECT_THROW(build_epsilon_net(Manifold::circle(), 0.1, 100), Error); }

TEST(EpsilonNet, Deterministic) {
  auto a = build_epsilon_net(Manifold::circle(), 0.1, 10000);
  auto b = build_epsilon_net(Manifold::circle(), 0.1, 10000);
  EXPECT_EQ(a.candidate_index, b.candidate_index);
  EXPECT_EQ(a.candidate_index.front(), 0u);
}

TEST(EpsilonNet, SizeScaling) {
  auto M = Manifold::circle();
  std::vector<double> sizes;
  for (double eps : {0.4, 0.2, 0.1}) sizes.push_back(build_epsilon_net(M, eps, 10000).points.size());
  for (double eps : {0.05}) sizes.push_back(build_epsilon_net(M, eps, 10000).points.size());
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    double r = sizes[i + 1] / sizes[i];
    EXPECT_GE(r, 1.5);
    EXPECT_LE(r, 2.5);
  }
}

TEST(EpsilonNet, SphereNet) {
  auto S = Manifold::sphere(2);
  auto net = build_epsilon_net(S, 0.4, 10000);
  auto cert = certify_net(net, net.candidates);
  EXPECT_TRUE(cert.ok());
}

TEST(EpsilonNet, MinimalCoverLowerBound) {
  // Any eps-cover of the unit circle needs ceil(pi / (2 asin(eps/2))) points.
  for (double eps : {0.2, 0.1, 0.05}) {
    auto net = build_epsilon_net(Manifold::circle(), eps, 10000);
    double lower = std::ceil(M_PI / (2 * std::asin(eps / 2)));
    EXPECT_GE(static_cast<double>(net.points.size()), lower);
    EXPECT_LE(static_cast<double>(net.points.size()), packing_bound_half_radius(Manifold::circle(), eps));
  }
}

TEST(PackingBound, CircleValue) {
  // 2pi / (cos(asin 0.05) * 0.1 * 2)
  double expect = 2 * M_PI / (std::sqrt(1 - 0.0025) * 0.2);
  EXPECT_NEAR(packing_bound(Manifold::circle(), 0.1), expect, 1e-10);
  EXPECT_NEAR(packing_bound(Manifold::circle(), 0.1), 31.455, 1e-3);
}

TEST(PackingBound, DecreasingInEps) {
  auto M = Manifold::circle();
  double prev = 1e300;
  for (double eps = 0.01; eps < 0.5; eps += 0.01) {
    double b = packing_bound(M, eps);
    EXPECT_LT(b, prev);
    prev = b;
  }
  EXPECT_THROW(packing_bound(M, 0.5), Error);
}

TEST(Voronoi, FourSeedsEqualArcs) {
  EpsilonNet net{Manifold::circle(), 0.3, {}, {}, {}};
  for (int k = 0; k < 4; ++k) {
    Vec x(2);
    x << std::cos(k * M_PI / 2), std::sin(k * M_PI / 2);
    net.points.push_back(x);
  }
  auto sample = Manifold::circle().sample(1000);
  auto v = restricted_voronoi(net, sample);
  auto sizes = v.cell_sizes();
  for (auto s : sizes) {
    EXPECT_GE(s, 249u);
    EXPECT_LE(s, 251u);
  }
}

TEST(Voronoi, NearestSeedAndSandwich) {
  auto M = Manifold::circle();
  auto net = build_epsilon_net(M, 0.1, 10000);
  auto v = restricted_voronoi(net, net.candidates);
  for (std::size_t i = 0; i < v.sample.size(); i += 7) {
    double best = 1e9;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < v.seeds.size(); ++j) {
      double d = (v.sample[i] - v.seeds[j]).norm();
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    EXPECT_EQ(v.assignment[i], arg);
  }
  EXPECT_TRUE(check_sandwich(v, 0.1).ok());
  auto comps = cell_components(v, 2.5 * max_nn_gap(net.candidates));
  for (int c : comps) EXPECT_EQ(c, 1);
}

TEST(Voronoi, SphereCellsConnected) {
  auto S = Manifold::sphere(2);
  auto net = build_epsilon_net(S, 0.4, 10000);
  auto v = restricted_voronoi(net, net.candidates);
  EXPECT_TRUE(check_sandwich(v, 0.4).ok());
  auto comps = cell_components(v, 2.0 * max_nn_gap(net.candidates));
  for (int c : comps) EXPECT_EQ(c, 1);
}

TEST(Voronoi, EmptyNet) {
  EpsilonNet net{Manifold::circle(), 0.1, {}, {}, {}};
  EXPECT_THROW(restricted_voronoi(net, Manifold::circle().sample(10)), Error);
}

TEST(DiscretizationGrid, CircleSpacing) {
  Structure s = Structure::single(2, 2.0, 1);
  auto g = build_discretization_grid(Manifold::circle(), s, 0.1, 1.0, 1.0);
  EXPECT_NEAR(g.spacings[0], 0.1, 1e-15);
  EXPECT_EQ(g.points.size(), 63u);
}

TEST(DiscretizationGrid, HalvingH) {
  Structure s = Structure::single(2, 2.0, 1);
  std::vector<double> n;
  for (double h : {0.2, 0.1, 0.05})
    n.push_back(build_discretization_grid(Manifold::circle(), s, h, 1.0, 1.0).points.size());
  for (std::size_t i = 0; i + 1 < n.size(); ++i) {
    EXPECT_NEAR(n[i + 1], 2 * n[i], 1.0);
    EXPECT_GE(n[i + 1] / n[i], 1.8);
    EXPECT_LE(n[i + 1] / n[i], 2.2);
  }
}

TEST(DiscretizationGrid, ProductAndFallback) {
  auto M = Manifold::product(Manifold::circle(), Manifold::circle());
  Structure s({2, 2}, {2.0, 1.0}, {1, 1});
  auto g = build_discretization_grid(M, s, 0.1, 1.0, 2.0);
  // block 1: 0.1 * 2^{-1} = 0.05 -> 126; block 2: 2^{-2} = 0.25 -> 26
  EXPECT_NEAR(g.spacings[0], 0.05, 1e-15);
  EXPECT_NEAR(g.spacings[1], 0.25, 1e-15);
  EXPECT_EQ(g.counts[0], 126u);
  EXPECT_EQ(g.counts[1], 26u);
  EXPECT_EQ(g.points.size(), 126u * 26u);

  auto f = build_discretization_grid(M, s, 0.1, 10.0, 1.0);
  EXPECT_FALSE(f.single_point[0]);
  EXPECT_TRUE(f.single_point[1]);
  EXPECT_EQ(f.counts[1], 1u);
}

TEST(DiscretizationGrid, Mismatch) {
  Structure s({2, 2}, {2.0, 1.0}, {1, 1});
  EXPECT_THROW(build_discretization_grid(Manifold::circle(), s, 0.1, 1, 1), Error);
  EXPECT_THROW(build_discretization_grid(Manifold::circle(), Structure::single(2, 2.0, 1), 0.0, 1, 1), Error);
}
