#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mext/core_math.hpp"
#include "mext/excursion.hpp"
#include "mext/field_sim.hpp"
#include "mext/manifold.hpp"
#include "mext/rng.hpp"

namespace mext {

/// Centering b_h and scale a_h of the rescaled supremum.
struct GumbelNormalization {
  double h = 0.0;
  double a_h = 0.0;
  double b_h = 0.0;
  double r1 = 0.0, r2 = 0.0, alpha1 = 2.0, alpha2 = 2.0;
  int p = 0;  // 0 for a scalar field, else the chi dimension
  double I_h = 0.0;
  double H = 0.0;
  double loglog_coefficient = 0.0;
  std::string route;  // gaussian, chi, abs
};

namespace detail {

inline GumbelNormalization beta_h_core(double r1, double h, double coef, double log_const_arg, double I_h,
                                       double H, Violations& v) {
  v.check(h > 0.0 && h < 1.0, "h must lie in (0,1)");
  v.check(r1 >= 1.0, "r1 must be at least 1");
  v.check(I_h > 0.0, "I_h must be positive (log argument)");
  v.check(H > 0.0, "Pickands value must be positive (log argument)");
  v.check(log_const_arg > 0.0 || !(I_h > 0.0 && H > 0.0), "log constant argument must be positive");
  v.throw_if_any("beta_h");
  GumbelNormalization g;
  const double L = std::log(1.0 / h);
  g.h = h;
  g.a_h = std::sqrt(2.0 * r1 * L);
  g.b_h = g.a_h + (coef * std::log(L) + std::log(log_const_arg)) / g.a_h;
  g.I_h = I_h;
  g.H = H;
  g.loglog_coefficient = coef;
  return g;
}

}  // namespace detail

/*!
 * beta_h = a + a^{-1} [c loglog(1/h) + log{(2 r1)^c H I_h / sqrt(2 pi)}],
 * a = sqrt(2 r1 log(1/h)), c = r1/alpha1 + r2/alpha2 - 1/2.
 */
inline GumbelNormalization beta_h_gaussian(double r1, double r2, double alpha1, double alpha2, double h, double I_h,
                                           double H) {
  Violations v;
  v.check(r2 >= 0.0, "r2 must be nonnegative");
  v.check(alpha1 > 0.0 && alpha1 <= 2.0, "alpha1 must lie in (0,2]");
  v.check(r2 == 0.0 || (alpha2 > 0.0 && alpha2 <= 2.0), "alpha2 must lie in (0,2]");
  const double coef = r1 / alpha1 + (r2 > 0.0 ? r2 / alpha2 : 0.0) - 0.5;
  const double arg = std::pow(2.0 * r1, coef) / std::sqrt(2.0 * kPi) * H * I_h;
  auto g = detail::beta_h_core(r1, h, coef, arg, I_h, H, v);
  g.r1 = r1;
  g.r2 = r2;
  g.alpha1 = alpha1;
  g.alpha2 = alpha2;
  g.route = "gaussian";
  return g;
}

/*!
 * Chi field sup_s ||X(s)||: c = m/alpha + (p-2)/2 and the constant
 * (2m)^c H_{m,alpha} I_h / (sqrt(2 pi))^p, I_h = int_{L x S^{p-1}} ||B P||.
 * At p = 1 this is the |X| case with I_h = 2 int_L ||B P||.
 */
inline GumbelNormalization beta_h_chi(double m, double alpha, int p, double h, double I_h, double H) {
  Violations v;
  v.check(p >= 1, "p must be at least 1");
  v.check(alpha > 0.0 && alpha <= 2.0, "alpha must lie in (0,2]");
  const double coef = m / alpha + (p - 2.0) / 2.0;
  const double arg = std::pow(2.0 * m, coef) / std::pow(std::sqrt(2.0 * kPi), p) * H * I_h;
  auto g = detail::beta_h_core(m, h, coef, arg, I_h, H, v);
  g.r1 = m;
  g.alpha1 = alpha;
  g.p = p;
  g.route = p == 1 ? "abs" : "chi";
  return g;
}

/// |X| case from the single integral J = int_L ||B P|| (I_h = 2 J).
inline GumbelNormalization beta_h_abs(double m, double alpha, double h, double J, double H) {
  return beta_h_chi(m, alpha, 1, h, 2.0 * J, H);
}

inline double theta_hz(const GumbelNormalization& g, double z) { return g.b_h + z / g.a_h; }

/// Kolmogorov-Smirnov distance of a sample to a continuous CDF.
struct KsResult {
  double distance = 0.0;
  double at = 0.0;        // sample point attaining it
  double std_error = 0.0;  // sqrt(F (1 - F) / n) at that point
};

template <class Cdf>
KsResult ks_distance(std::vector<double> x, Cdf&& F) {
  if (x.empty()) throw Error("ks_distance: empty sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  KsResult k;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = F(x[i]);
    const double d = std::max((i + 1) / n - f, f - i / n);
    if (d > k.distance) {
      k.distance = d;
      k.at = x[i];
    }
  }
  const double f = F(k.at);
  k.std_error = std::sqrt(f * (1.0 - f) / n);
  return k;
}

struct GumbelRow {
  GumbelNormalization norm;
  std::size_t n_reps = 0;
  std::size_t grid_points = 0;
  double grid_spacing = 0.0;
  std::vector<double> z;
  std::vector<double> empirical_cdf;
  std::vector<double> empirical_cdf_coarse;  // every other grid point, same draws
  std::vector<double> gumbel;
  KsResult ks;
  bool grid_limited = false;

  /// P(max > theta_{h,z}) and its binomial standard error.
  double exceed(std::size_t i) const { return 1.0 - empirical_cdf[i]; }
  double exceed_se(std::size_t i) const {
    const double q = exceed(i);
    return std::sqrt(q * (1.0 - q) / static_cast<double>(n_reps));
  }
};

struct GumbelExperiment {
  Manifold manifold;
  double alpha = 2.0;
  double c = 0.2;
  std::vector<double> h_list;
  std::size_t n_reps = 2000;
  std::uint64_t seed = 1;
  double spacing_factor = 0.05;  // grid step in units of h / c
  std::optional<double> H;
  int quad_resolution = 256;
  std::vector<double> z_grid{-1.0, 0.0, 1.0, 2.0, 3.0};
};

/// Field on M_h = M with kernel exp(-(c ||s - t|| / h)^alpha).
inline CovarianceModel stationary_model(const Manifold& M, double alpha, double c, double h) {
  return CovarianceModel::isotropic(M.ambient_dim(), alpha, c, h, M.intrinsic_dim());
}

inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t k) { return seed ^ mix64(k + 1); }

/*!
 * Per h: grid maxima on M.arc_grid(spacing_factor h / c), the law of
 * a_h (max - b_h) against exp(-e^{-z}) at z_grid, and the KS distance.
 * Replications for the k-th h use seed sub_seed(seed, k).
 */
inline std::vector<GumbelRow> gumbel_limit_experiment(const GumbelExperiment& cfg) {
  Violations v;
  v.check(!cfg.h_list.empty(), "h_list must not be empty");
  for (std::size_t i = 0; i < cfg.h_list.size(); ++i) {
    v.check(cfg.h_list[i] > 0.0 && cfg.h_list[i] < 1.0, "every h must lie in (0,1)");
    if (i) v.check(cfg.h_list[i] < cfg.h_list[i - 1], "h_list must be decreasing");
  }
  v.check(cfg.c > 0.0, "c must be positive");
  v.check(cfg.spacing_factor > 0.0, "spacing_factor must be positive");
  v.check(cfg.n_reps >= 2, "n_reps must be at least 2");
  v.throw_if_any("gumbel_limit_experiment");

  std::vector<GumbelRow> rows;
  for (std::size_t k = 0; k < cfg.h_list.size(); ++k) {
    const double h = cfg.h_list[k];
    const auto model = stationary_model(cfg.manifold, cfg.alpha, cfg.c, h);
    const double H = detail::resolve_pickands(model.structure(), cfg.H, "gumbel_limit_experiment");
    const double I = energy_integral(cfg.manifold, model, cfg.quad_resolution, false);
    GumbelRow row;
    row.norm = beta_h_gaussian(cfg.manifold.intrinsic_dim(), 0.0, cfg.alpha, 2.0, h, I, H);
    const auto grid = cfg.manifold.arc_grid(cfg.spacing_factor * h / cfg.c);
    const auto g = grid_maxima(model, grid.points, cfg.n_reps, sub_seed(cfg.seed, k));
    row.n_reps = cfg.n_reps;
    row.grid_points = g.grid_points;
    row.grid_spacing = g.grid_spacing;
    std::vector<double> y(cfg.n_reps), yc(cfg.n_reps);
    for (std::size_t r = 0; r < cfg.n_reps; ++r) {
      y[r] = row.norm.a_h * (g.full[r] - row.norm.b_h);
      yc[r] = row.norm.a_h * (g.coarse[r] - row.norm.b_h);
    }
    const double n = static_cast<double>(cfg.n_reps);
    row.z = cfg.z_grid;
    for (double z : cfg.z_grid) {
      const auto cnt = std::count_if(y.begin(), y.end(), [&](double t) { return t <= z; });
      const auto cntc = std::count_if(yc.begin(), yc.end(), [&](double t) { return t <= z; });
      row.empirical_cdf.push_back(cnt / n);
      row.empirical_cdf_coarse.push_back(cntc / n);
      row.gumbel.push_back(gumbel_cdf(z));
      const double F = cnt / n;
      if (cntc / n - F > std::sqrt(F * (1.0 - F) / n)) row.grid_limited = true;
    }
    row.ks = ks_distance(y, [](double z) { return gumbel_cdf(z); });
    rows.push_back(std::move(row));
  }
  return rows;
}

/// KS_{i+1} <= KS_i + 2 sqrt(se_i^2 + se_{i+1}^2) along the h list.
inline bool ks_trend_ok(const std::vector<GumbelRow>& rows) {
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].ks.distance > rows[i - 1].ks.distance + 2.0 * std::hypot(rows[i - 1].ks.std_error, rows[i].ks.std_error))
      return false;
  return true;
}

struct ConfidenceTube {
  double radius = 0.0;
  double z_alpha = 0.0;
  double alpha = 0.0;
  Mat center;  // f_hat, N x p

  /// ||f_hat(s_i) - g|| <= radius
  bool contains_at(std::size_t i, const Vec& g) const {
    return (center.row(static_cast<Eigen::Index>(i)).transpose() - g).norm() <= radius;
  }
  /// g (N x p, same points) lies in the tube everywhere
  bool contains(const Mat& g) const {
    if (g.rows() != center.rows() || g.cols() != center.cols()) throw Error("ConfidenceTube: shape mismatch");
    return (center - g).rowwise().norm().maxCoeff() <= radius;
  }
};

/// Radius b_h + z_alpha / a_h around f_hat.
inline ConfidenceTube confidence_tube(const Mat& f_hat, const GumbelNormalization& norm, double alpha) {
  ConfidenceTube t;
  t.alpha = alpha;
  t.z_alpha = gumbel_quantile(alpha);
  t.radius = theta_hz(norm, t.z_alpha);
  t.center = f_hat;
  return t;
}

struct ConfidenceRegion {
  double threshold = 0.0;  // ||f_hat - g0|| <= threshold
  double z_alpha = 0.0;
  std::vector<bool> member;
  std::vector<std::size_t> indices;

  bool contains(const std::vector<std::size_t>& truth) const {
    for (auto i : truth)
      if (!member.at(i)) return false;
    return true;
  }
};

/// {s in A : a_h (||f_hat(s) - g0|| - b_h) <= z_alpha}; rows of f_hat are the points of A.
inline ConfidenceRegion confidence_region(const Mat& f_hat, const Vec& g0, const GumbelNormalization& norm,
                                          double alpha) {
  if (f_hat.cols() != g0.size()) throw Error("confidence_region: f_hat and g0 dimensions differ");
  ConfidenceRegion r;
  r.z_alpha = gumbel_quantile(alpha);
  r.threshold = theta_hz(norm, r.z_alpha);
  r.member.resize(static_cast<std::size_t>(f_hat.rows()));
  for (Eigen::Index i = 0; i < f_hat.rows(); ++i) {
    const double d = (f_hat.row(i).transpose() - g0).norm();
    r.member[static_cast<std::size_t>(i)] = norm.a_h * (d - norm.b_h) <= r.z_alpha;
    if (r.member[static_cast<std::size_t>(i)]) r.indices.push_back(static_cast<std::size_t>(i));
  }
  return r;
}

struct CoverageResult {
  GumbelNormalization norm;
  double alpha = 0.0;
  double threshold = 0.0;
  std::size_t n_trials = 0;
  std::size_t grid_points = 0;
  double coverage = 0.0;
  double coverage_coarse = 0.0;  // every other manifold point, same draws
  double std_error = 0.0;
  double mean_region_size = 0.0;  // region experiment only
  bool grid_limited = false;
};

struct TubeExperiment {
  Manifold manifold = Manifold::circle();
  double base_alpha = 2.0;
  double c = 0.2;
  int p = 2;
  double h = 0.02;
  double alpha = 0.1;
  std::size_t n_trials = 2000;
  std::uint64_t seed = 1;
  double spacing_factor = 0.05;
  std::optional<double> H;
  int quad_resolution = 256;
};

/*!
 * True f = 0 and f_hat = X, X made of p i.i.d. copies of the stationary
 * field. A trial covers when the tube around f_hat contains 0 at every grid
 * point, i.e. max ||X|| <= radius.
 */
inline CoverageResult tube_coverage_experiment(const TubeExperiment& cfg) {
  const auto base = stationary_model(cfg.manifold, cfg.base_alpha, cfg.c, cfg.h);
  const auto chi = CovarianceModel::chi_lift(base, cfg.p);
  const double H = detail::resolve_pickands(base.structure(), cfg.H, "tube_coverage_experiment");
  const double I = chi_energy_integral(cfg.manifold, chi, cfg.quad_resolution, false);
  CoverageResult res;
  res.norm = beta_h_chi(cfg.manifold.intrinsic_dim(), cfg.base_alpha, cfg.p, cfg.h, I, H);
  res.alpha = cfg.alpha;
  res.threshold = theta_hz(res.norm, gumbel_quantile(cfg.alpha));
  res.n_trials = cfg.n_trials;
  const auto grid = cfg.manifold.arc_grid(cfg.spacing_factor * cfg.h / cfg.c);
  res.grid_points = grid.points.size();
  const auto g = chi_grid_maxima(chi, grid.points, cfg.n_trials, cfg.seed);
  std::size_t k = 0, kc = 0;
  for (std::size_t r = 0; r < cfg.n_trials; ++r) {
    k += g.full[r] <= res.threshold;
    kc += g.coarse[r] <= res.threshold;
  }
  const double n = static_cast<double>(cfg.n_trials);
  res.coverage = k / n;
  res.coverage_coarse = kc / n;
  res.std_error = std::sqrt(res.coverage * (1.0 - res.coverage) / n);
  res.grid_limited = res.coverage_coarse - res.coverage > res.std_error;
  return res;
}

struct RegionExperiment {
  double base_alpha = 2.0;
  double c = 0.2;
  double h = 0.02;
  double alpha = 0.1;
  std::size_t n_trials = 2000;
  std::uint64_t seed = 1;
  double spacing_factor = 0.05;
  int lattice = 20;         // lattice x lattice ambient points
  double half_width = 1.5;  // on [-half_width, half_width]^2
  std::optional<double> H;
  int quad_resolution = 256;
};

/*!
 * M = unit circle = {s : ||s||^2 = 1}, f(s) = ||s||^2, g0 = 1 and
 * f_hat = f + X with X the stationary field on R^2. A is the circle grid
 * plus a uniform lattice; a trial succeeds when every circle point is in F_h.
 */
inline CoverageResult region_containment_experiment(const RegionExperiment& cfg) {
  Violations v;
  v.check(cfg.lattice >= 2, "lattice must be at least 2");
  v.check(cfg.half_width > 1.0, "half_width must exceed 1 so the box contains M");
  v.throw_if_any("region_containment_experiment");
  const Manifold M = Manifold::circle();
  const auto model = stationary_model(M, cfg.base_alpha, cfg.c, cfg.h);
  const double H = detail::resolve_pickands(model.structure(), cfg.H, "region_containment_experiment");
  const double J = energy_integral(M, model, cfg.quad_resolution, false);
  CoverageResult res;
  res.norm = beta_h_abs(1.0, cfg.base_alpha, cfg.h, J, H);
  res.alpha = cfg.alpha;
  res.threshold = theta_hz(res.norm, gumbel_quantile(cfg.alpha));
  res.n_trials = cfg.n_trials;

  std::vector<Vec> A = M.arc_grid(cfg.spacing_factor * cfg.h / cfg.c).points;
  const std::size_t n_truth = A.size();
  for (int i = 0; i < cfg.lattice; ++i)
    for (int j = 0; j < cfg.lattice; ++j) {
      Vec s(2);
      s << -cfg.half_width + 2.0 * cfg.half_width * i / (cfg.lattice - 1),
          -cfg.half_width + 2.0 * cfg.half_width * j / (cfg.lattice - 1);
      A.push_back(s);
    }
  res.grid_points = A.size();
  std::vector<std::size_t> truth(n_truth), truth_coarse;
  for (std::size_t i = 0; i < n_truth; ++i) {
    truth[i] = i;
    if (i % 2 == 0) truth_coarse.push_back(i);
  }
  Vec f(static_cast<Eigen::Index>(A.size()));
  for (std::size_t i = 0; i < A.size(); ++i) f(static_cast<Eigen::Index>(i)) = A[i].squaredNorm();
  const Vec g0 = Vec::Ones(1);

  GaussianSampler gs(covariance_matrix(model, A), model.describe());
  std::vector<unsigned char> ok(cfg.n_trials), ok_c(cfg.n_trials);
  std::vector<std::size_t> size(cfg.n_trials);
  gs.for_each_rep(cfg.n_trials, cfg.seed, 0, 1, [&](std::size_t r, const Mat& X) {
    const Mat fhat = f + X.col(0);
    const auto reg = confidence_region(fhat, g0, res.norm, cfg.alpha);
    ok[r] = reg.contains(truth);
    ok_c[r] = reg.contains(truth_coarse);
    size[r] = reg.indices.size();
  });
  const double n = static_cast<double>(cfg.n_trials);
  double k = 0, kc = 0, sz = 0;
  for (std::size_t r = 0; r < cfg.n_trials; ++r) {
    k += ok[r];
    kc += ok_c[r];
    sz += static_cast<double>(size[r]);
  }
  res.coverage = k / n;
  res.coverage_coarse = kc / n;
  res.std_error = std::sqrt(res.coverage * (1.0 - res.coverage) / n);
  res.mean_region_size = sz / n;
  res.grid_limited = res.coverage_coarse - res.coverage > res.std_error;
  return res;
}

}  // namespace mext
