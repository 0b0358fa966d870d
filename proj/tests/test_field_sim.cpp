#include <gtest/gtest.h>

#include <cmath>

#include "mext/field_sim.hpp"
#include "mext/geometry.hpp"

using namespace mext;

namespace {
Vec on_circle(double a) {
  Vec x(2);
  x << std::cos(a), std::sin(a);
  return x;
}
Vec cat(const Vec& a, const Vec& b) {
  Vec x(a.size() + b.size());
  x << a, b;
  return x;
}
std::vector<Vec> line_points(std::initializer_list<double> xs) {
  std::vector<Vec> out;
  for (double x : xs) out.push_back(Vec::Constant(1, x));
  return out;
}
}  // namespace

TEST(CovarianceMatrix, ThreePointsOnCircle) {
  auto m = CovarianceModel::isotropic(2, 1.0, 1.0);
  std::vector<Vec> pts = {on_circle(0), on_circle(2 * M_PI / 3), on_circle(4 * M_PI / 3)};
  auto c = covariance_matrix(m, pts);
  EXPECT_LT((c.sigma - c.sigma.transpose()).norm(), 1e-15);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(c.sigma(i, i), 1.0);
  // chord sqrt(3): off-diagonals exp(-sqrt 3), eigenvalues 1 + 2r, 1 - r, 1 - r
  const double r = std::exp(-std::sqrt(3.0));
  EXPECT_NEAR(c.sigma(0, 1), r, 1e-14);
  Eigen::SelfAdjointEigenSolver<Mat> es(c.sigma);
  EXPECT_NEAR(es.eigenvalues()(0), 1 - r, 1e-12);
  EXPECT_NEAR(es.eigenvalues()(2), 1 + 2 * r, 1e-12);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  EXPECT_EQ(c.jitter, 0.0);
}

TEST(CovarianceMatrix, SinglePoint) {
  auto c = covariance_matrix(CovarianceModel::isotropic(2, 2.0, 3.0), {on_circle(1.0)});
  ASSERT_EQ(c.sigma.rows(), 1);
  EXPECT_EQ(c.sigma(0, 0), 1.0);
}

TEST(CovarianceMatrix, ChiLiftCoincidentLocation) {
  auto m = CovarianceModel::chi_lift(CovarianceModel::isotropic(2, 1.0, 2.0), 2);
  const Vec s = on_circle(0.7);
  for (double b : {0.1, 1.0, 2.5}) {
    const Vec v1 = on_circle(0.3), v2 = on_circle(0.3 + b);
    const double r = m(cat(s, v1), cat(s, v2));
    EXPECT_NEAR(r, v1.dot(v2), 1e-15);
    EXPECT_NEAR(r, 1.0 - 0.5 * (v1 - v2).squaredNorm(), 1e-14);
  }
}

TEST(CovarianceMatrix, RefusesInvalidKernel) {
  // step D field evaluated at midpoints breaks positive definiteness
  auto m = CovarianceModel::powered_exponential(Structure::single(1, 2.0), [](const Vec& x) {
    return Mat::Constant(1, 1, x(0) > 0 ? 2.2 : 0.2);
  });
  std::vector<Vec> pts;
  for (int i = 0; i < 9; ++i) pts.push_back(Vec::Constant(1, -1.0 + 0.25 * i));
  try {
    covariance_matrix(m, pts);
    FAIL();
  } catch (const InvalidKernel& e) {
    EXPECT_NE(std::string(e.what()).find("powered_exponential"), std::string::npos);
  }
}

TEST(CovarianceMatrix, GridCap) {
  std::vector<Vec> pts(kMaxGridPoints + 1, Vec::Zero(1));
  EXPECT_THROW(covariance_matrix(CovarianceModel::isotropic(1, 2.0, 1.0), pts), Error);
}

TEST(SampleField, TwoPointCorrelation) {
  // exp(-d^2) = 0.5
  auto m = CovarianceModel::isotropic(1, 2.0, 1.0);
  auto f = sample_field(m, line_points({0.0, std::sqrt(std::log(2.0))}), 10000, 123);
  const double c = (f.values.col(0).array() * f.values.col(1).array()).mean();
  EXPECT_NEAR(c, 0.5, 0.03);
  for (int j = 0; j < 2; ++j) EXPECT_NEAR(f.values.col(j).squaredNorm() / 10000.0, 1.0, 0.05);
}

TEST(SampleField, DeterministicAcrossThreads) {
  auto m = CovarianceModel::isotropic(2, 1.5, 2.0);
  auto pts = Manifold::circle().sample(50);
  set_max_threads(1);
  auto a = sample_field(m, pts, 300, 77);
  set_max_threads(4);
  auto b = sample_field(m, pts, 300, 77);
  set_max_threads(0);
  auto c = sample_field(m, pts, 300, 78);
  EXPECT_EQ(std::memcmp(a.values.data(), b.values.data(), sizeof(double) * a.values.size()), 0);
  EXPECT_NE((a.values - c.values).norm(), 0.0);
}

TEST(SampleField, EmpiricalCovarianceWithinFiveSe) {
  auto m = CovarianceModel::isotropic(2, 1.0, 1.5);
  auto pts = Manifold::circle().sample(8);
  const int n = 5000;
  auto f = sample_field(m, pts, n, 5);
  auto cov = covariance_matrix(m, pts).sigma;
  Mat emp = f.values.transpose() * f.values / n;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      const double se = std::sqrt((1.0 + cov(i, j) * cov(i, j)) / n);
      EXPECT_LT(std::abs(emp(i, j) - cov(i, j)), 5 * se) << i << "," << j;
    }
}

TEST(SampleField, ZeroVariancePointsPinned) {
  Mat S(3, 3);
  S << 0, 0, 0, 0, 2, 1, 0, 1, 2;
  GaussianSampler gs(S);
  gs.for_each_rep(10, 1, 0, 1, [&](std::size_t, const Mat& X) {
    EXPECT_EQ(X(0, 0), 0.0);
    EXPECT_NE(X(1, 0), 0.0);
  });
}

TEST(SampleField, EigenFallbackReportsClip) {
  Mat S(2, 2);
  S << 1, 1, 1, 1;  // rank one
  S(0, 1) = S(1, 0) = 1.0 + 1e-9;
  GaussianSampler gs(S);
  EXPECT_EQ(gs.method(), "eigen");
  EXPECT_GT(gs.clip_mass(), 0.0);
  EXPECT_EQ(gs.rank(), 1u);
}

TEST(SampleField, CsvExport) {
  auto f = sample_field(CovarianceModel::isotropic(1, 2.0, 1.0), line_points({0.0, 1.0}), 2, 3);
  std::ostringstream os;
  write_field_csv(os, f);
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("rep,point_index,value\n0,0,", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 5);
}

TEST(ChiLiftSupremum, PEqualsOne) {
  auto m = CovarianceModel::chi_lift(CovarianceModel::isotropic(2, 2.0, 1.0), 1);
  auto f = sample_vector_field(m, Manifold::circle().sample(40), 50, 9);
  for (const auto& s : chi_lift_supremum(f, sphere_grid(1, 1))) EXPECT_EQ(s.norm_max, s.lift_max);
}

TEST(ChiLiftSupremum, DenseCircleGrid) {
  auto m = CovarianceModel::chi_lift(CovarianceModel::isotropic(2, 2.0, 1.0), 2);
  auto f = sample_vector_field(m, Manifold::circle().sample(40), 50, 9);
  for (const auto& s : chi_lift_supremum(f, sphere_grid(2, 512))) {
    EXPECT_LE(s.lift_max, s.norm_max + 1e-15);
    EXPECT_LE(s.norm_max - s.lift_max, s.norm_max * (1 - std::cos(M_PI / 512)) + 1e-15);
  }
}

TEST(ChiLiftSupremum, SinglePoint) {
  Mat X(1, 2);
  X << 3, 4;
  EXPECT_DOUBLE_EQ(chi_lift_supremum(X, sphere_grid(2, 8)).norm_max, 5.0);
  EXPECT_THROW(chi_lift_supremum(X, sphere_grid(3, 8)), Error);
}

TEST(VectorField, ComponentsIndependentUnitVariance) {
  auto m = CovarianceModel::chi_lift(CovarianceModel::isotropic(2, 2.0, 1.0), 3);
  auto f = sample_vector_field(m, {on_circle(0.0), on_circle(0.1)}, 8000, 21);
  Mat acc = Mat::Zero(3, 3);
  for (const auto& X : f.reps) acc += X.row(0).transpose() * X.row(0);
  acc /= 8000.0;
  EXPECT_LT((acc - Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 5 * std::sqrt(2.0 / 8000));
}

TEST(CustomCrossCov, DominanceGuard) {
  const Mat J = Mat::Constant(3, 3, 1.0 / 3.0);
  const Mat Q = Mat::Identity(3, 3) - J;
  EXPECT_NO_THROW(CovarianceModel::custom_crosscov({J, Q}, {2.0 * Mat::Identity(2, 2), Mat::Identity(2, 2)}));
  try {
    CovarianceModel::custom_crosscov({J, Q}, {10.0 * Mat::Identity(2, 2), Mat::Identity(2, 2)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("dominance"), std::string::npos);
  }
  EXPECT_THROW(CovarianceModel::custom_crosscov({J}, {Mat::Identity(2, 2)}), Error);  // sum W != I
}

TEST(CustomCrossCov, SampledCrossCovariance) {
  Mat W1(2, 2), W2(2, 2);
  W1 << 0.5, 0.3, 0.3, 0.5;
  W2 = Mat::Identity(2, 2) - W1;
  auto m = CovarianceModel::custom_crosscov({W1, W2}, {0.5 * Mat::Identity(2, 2), 4.0 * Mat::Identity(2, 2)});
  std::vector<Vec> locs = {on_circle(0.0), on_circle(0.4)};
  const int n = 8000;
  auto f = sample_vector_field(m, locs, n, 4);
  Mat emp = Mat::Zero(2, 2), emp0 = Mat::Zero(2, 2);
  for (const auto& X : f.reps) {
    emp += X.row(0).transpose() * X.row(1);
    emp0 += X.row(0).transpose() * X.row(0);
  }
  emp /= n;
  emp0 /= n;
  const Mat C = m.cross_cov(locs[0], locs[1]);
  EXPECT_LT((emp - C).cwiseAbs().maxCoeff(), 5 * std::sqrt(2.0 / n));
  EXPECT_LT((emp0 - Mat::Identity(2, 2)).cwiseAbs().maxCoeff(), 5 * std::sqrt(2.0 / n));
}

TEST(LocalStationarity, RatioAllFamilies) {
  Rng rng(31);
  Structure s1 = Structure::single(2, 1.5, 1);
  auto pe = CovarianceModel::powered_exponential(s1, [](const Vec& x) {
    Mat D(2, 2);
    D << 1.0 + 0.3 * x(0), 0.2, 0.0, 1.5 + 0.2 * x(1);
    return D;
  });
  auto chi = CovarianceModel::chi_lift(CovarianceModel::isotropic(2, 1.0, 2.0), 2);
  Mat W1(2, 2);
  W1 << 0.5, 0.2, 0.2, 0.5;
  auto cc = CovarianceModel::custom_crosscov({W1, Mat(Mat::Identity(2, 2) - W1)},
                                             {Mat::Identity(2, 2), 3.0 * Mat::Identity(2, 2)});
  for (int k = 0; k < 20; ++k) {
    const double a = 2 * M_PI * rng.uniform(), b = 2 * M_PI * rng.uniform();
    const double da = rng.uniform() - 0.5, db = rng.uniform() - 0.5;
    const double dn = std::hypot(da, db);
    for (auto [mag, tol] : {std::pair{1e-2, 0.2}, std::pair{1e-3, 0.05}}) {
      const double ea = mag * da / dn, eb = mag * db / dn;
      const Vec s = on_circle(a), su = on_circle(a + ea);
      EXPECT_NEAR(local_stationarity_ratio(pe, s, su - s), 1.0, tol);
      const Vec t = cat(s, on_circle(b)), tu = cat(su, on_circle(b + eb));
      EXPECT_NEAR(local_stationarity_ratio(chi, t, tu - t), 1.0, tol);
      EXPECT_NEAR(local_stationarity_ratio(cc, t, tu - t), 1.0, tol);
    }
  }
}

TEST(LocalStationarity, ChiLiftFactorizes) {
  auto base = CovarianceModel::isotropic(2, 1.0, 2.0);
  auto chi = CovarianceModel::chi_lift(base, 3);
  auto S = Manifold::sphere(2).sample(10);
  for (int i = 0; i < 10; ++i) {
    const Vec s1 = on_circle(0.3 * i), s2 = on_circle(1.0 + 0.1 * i);
    EXPECT_EQ(chi(cat(s1, S[i]), cat(s2, S[9 - i])), base(s1, s2) * S[i].dot(S[9 - i]));
  }
}

TEST(LocalStationarity, LiftedD) {
  auto chi = CovarianceModel::chi_lift(CovarianceModel::isotropic(2, 1.0, 2.0), 2);
  Mat D = chi.D(cat(on_circle(0.1), on_circle(0.2)));
  EXPECT_NEAR(D(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(D(3, 3), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(D(0, 2), 0.0);
}

TEST(Diagnostics, DependenceTable) {
  const double c = 0.8;
  auto m = CovarianceModel::isotropic(2, 1.0, c, 0.1);
  auto rows = dependence_diagnostic(m, Manifold::circle(), {1.0, 2.0, 4.0}, 400);
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_LE(rows[i].Q, std::exp(-c * rows[i].x) + 1e-12);
    EXPECT_TRUE(rows[i].eta_ok);
    EXPECT_GT(rows[i].pairs, 0u);
    if (i) EXPECT_LE(rows[i].Q, rows[i - 1].Q);
  }
  auto b = berman_check(rows, 1, 1.0, 0, 2.0, 1.0);
  ASSERT_EQ(b.size(), 2u);  // x = 1 is skipped (log x = 0)
  for (auto& r : b) EXPECT_EQ(r.ok, r.lhs <= r.v);
}

TEST(Diagnostics, EigenBounds) {
  auto m = CovarianceModel::isotropic(2, 2.0, 3.0);
  auto b = eigen_bounds_check(m, Manifold::circle().sample(10), 1.0, 10.0);
  EXPECT_NEAR(b.lambda_min, 9.0, 1e-12);
  EXPECT_NEAR(b.lambda_max, 9.0, 1e-12);
  EXPECT_TRUE(b.ok);
  EXPECT_FALSE(eigen_bounds_check(m, Manifold::circle().sample(10), 1.0, 5.0).ok);
}
