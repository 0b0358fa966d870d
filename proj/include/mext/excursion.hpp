#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mext/core_math.hpp"
#include "mext/field_sim.hpp"
#include "mext/geometry.hpp"
#include "mext/manifold.hpp"
#include "mext/pickands.hpp"

namespace mext {

namespace detail {

// Column scaling of xi_h^{-1}: block 1 of the location part divided by h.
inline Vec rescale_diagonal(const CovarianceModel& m) {
  Vec d = Vec::Ones(m.structure().dim());
  const Structure& ls = m.location_structure();
  d.segment(ls.offset(0), ls.block_size(0)) /= m.rescale_h();
  return d;
}

// prod_j ||D_j P_j||_{r_j} at one point. The columns of P belonging to block j
// are those with a nonzero component in block j's rows.
inline double energy_density(const Structure& s, const Mat& D, const Mat& P, const Vec& point) {
  if (D.rows() != P.rows())
    throw Error("energy_integral: D is " + std::to_string(D.rows()) + "x" + std::to_string(D.cols()) +
                " but the manifold is embedded in R^" + std::to_string(P.rows()));
  if (std::abs(D.determinant()) < 1e-300) {
    std::ostringstream os;
    os << "energy_integral: singular D_t at t = (" << point.transpose() << ")";
    throw Error(os.str());
  }
  const Mat G = D * P;
  double out = 1.0;
  for (int b = 0; b < s.blocks(); ++b) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index c = 0; c < P.cols(); ++c)
      if (P.col(c).segment(s.offset(b), s.block_size(b)).norm() > 1e-12) cols.push_back(c);
    if (static_cast<int>(cols.size()) != s.manifold_dim(b)) {
      std::ostringstream os;
      os << "energy_integral: tangent space has " << cols.size() << " directions in block " << b
         << " but the structure declares r = " << s.manifold_dim(b);
      throw Error(os.str());
    }
    if (cols.empty()) continue;
    Mat Gb(s.block_size(b), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
      Gb.col(static_cast<Eigen::Index>(c)) = G.col(cols[c]).segment(s.offset(b), s.block_size(b));
    out *= minor_norm(Gb);
  }
  return out;
}

inline double resolve_pickands(const Structure& s, std::optional<double> H, const char* who) {
  if (H) {
    if (!(*H > 0.0) || !std::isfinite(*H)) throw Error(std::string(who) + ": Pickands value must be positive");
    return *H;
  }
  if (auto v = pickands_closed_form(s)) return *v;
  std::ostringstream os;
  os << who << ": no closed-form Pickands constant for alpha = (";
  for (int i = 0; i < s.blocks(); ++i) os << (i ? "," : "") << s.exponent(i);
  os << "); run estimate_pickands and pass its estimate";
  throw Error(os.str());
}

inline void check_u(double u, const char* who) {
  if (!(u > 1.0)) throw Error(std::string(who) + ": u must be > 1");
}

}  // namespace detail

/*!
 * int_M prod_j ||D_{j,t} P_{j,t}||_{r_j} dH_r(t).
 *
 * With original_coordinates (the default) D_t is the expansion matrix of the
 * field on M itself, i.e. the model's D composed with xi_h^{-1}. Otherwise the
 * model's D is used as is, which gives I_h(M_h) of the rescaled field.
 */
inline double energy_integral(const Manifold& M, const CovarianceModel& m, int resolution,
                              bool original_coordinates = true) {
  const Structure& s = m.structure();
  const Vec scale = original_coordinates ? detail::rescale_diagonal(m) : Vec::Ones(s.dim());
  double acc = 0.0;
  for (const auto& nd : M.quadrature(resolution)) {
    const Mat D = m.D(nd.point) * scale.asDiagonal();
    acc += nd.weight * detail::energy_density(s, D, M.frame_at(nd.param), nd.point);
  }
  return acc;
}

/// H * I * prod_i u^{2 r_i / alpha_i} * Psi(u)
inline double gaussian_excursion_formula(const Structure& s, double H, double I, double u) {
  double pw = 0.0;
  for (int i = 0; i < s.blocks(); ++i) pw += 2.0 * s.manifold_dim(i) / s.exponent(i);
  return H * I * std::pow(u, pw) * mills_psi(u);
}

/// Leading term of P(sup_M X > u) for a locally stationary unit-variance field.
inline double gaussian_excursion_asymptotic(const Manifold& M, const CovarianceModel& m, double u,
                                            int resolution = 256, std::optional<double> H = std::nullopt) {
  detail::check_u(u, "gaussian_excursion_asymptotic");
  const double h = detail::resolve_pickands(m.structure(), H, "gaussian_excursion_asymptotic");
  return gaussian_excursion_formula(m.structure(), h, energy_integral(M, m, resolution), u);
}

/// L x S^{p-1} embedded in R^{n+p}.
inline Manifold lifted_manifold(const Manifold& L, int p) {
  if (p < 2) throw Error("lifted_manifold: p must be at least 2");
  if (p > 3) throw Unsupported("lifted_manifold: sphere factors beyond S^2 are not supported");
  return Manifold::product(L, Manifold::sphere(p - 1));
}

/// ||(1/sqrt 2) I_p P_v||_{p-1} for the tangent frame of S^{p-1} at v.
inline double sphere_lift_factor(const Vec& v) {
  const auto p = static_cast<int>(v.size());
  if (p < 2 || p > 3) throw Unsupported("sphere_lift_factor: p must be 2 or 3");
  const Mat P = Manifold::sphere(p - 1).tangent_frame(v).columns;
  return minor_norm(Mat(P / std::numbers::sqrt2));
}

/*!
 * int_{L x S^{p-1}} ||B_t P_s||_m dH_{m+p-1}. For chi_lift models B does not
 * depend on v and the integral is |S^{p-1}| int_L ||B P||; the custom family
 * is integrated over the product.
 */
inline double chi_energy_integral(const Manifold& L, const CovarianceModel& m, int resolution,
                                  bool original_coordinates = true) {
  if (m.family() == KernelFamily::chi_lift) {
    const double base = energy_integral(L, m.base(), resolution, original_coordinates);
    return m.p() == 1 ? 2.0 * base : sphere_area(m.p()) * base;
  }
  if (m.family() != KernelFamily::custom_crosscov) throw Error("chi_energy_integral: model must be a vector field");
  const int n = m.location_dim(), p = m.p();
  const Structure loc({n}, {2.0}, {L.intrinsic_dim()});
  const Vec scale = original_coordinates ? detail::rescale_diagonal(m) : Vec::Ones(n + p);
  auto density = [&](const Vec& point, const Vec& param) {
    const Mat B = (m.D(point) * scale.asDiagonal()).topLeftCorner(n, n);
    return detail::energy_density(loc, B, L.frame_at(param), point.head(n));
  };
  if (p == 1) {
    double acc = 0.0;
    for (const auto& nd : L.quadrature(resolution)) {
      Vec t(n + 1);
      t << nd.point, 1.0;
      acc += nd.weight * density(t, nd.param);
    }
    return 2.0 * acc;
  }
  const Manifold LS = lifted_manifold(L, p);
  double acc = 0.0;
  for (const auto& nd : LS.quadrature(resolution))
    acc += nd.weight * density(nd.point, nd.param.head(L.intrinsic_dim()));
  return acc;
}

/// H_m / (2 pi)^{(p-1)/2} * I * u^{2m/alpha + p - 1} * Psi(u), with the base
/// structure's exponent sum in place of 2m/alpha.
inline double chi_excursion_formula(const Structure& base, int p, double H, double I, double u) {
  double pw = p - 1.0;
  for (int i = 0; i < base.blocks(); ++i) pw += 2.0 * base.manifold_dim(i) / base.exponent(i);
  return H / std::pow(2.0 * kPi, 0.5 * (p - 1)) * I * std::pow(u, pw) * mills_psi(u);
}

inline Structure chi_base_structure(const CovarianceModel& m) {
  if (m.family() == KernelFamily::chi_lift) return m.base().structure();
  const Structure& s = m.structure();
  return Structure({s.block_size(0)}, {s.exponent(0)}, {s.manifold_dim(0)});
}

/// Leading term of P(sup_L |X| > u) for a scalar field: twice the Gaussian term.
inline double abs_excursion_asymptotic(const Manifold& L, const CovarianceModel& base, double u, int resolution = 256,
                                       std::optional<double> H = std::nullopt) {
  detail::check_u(u, "abs_excursion_asymptotic");
  const double h = detail::resolve_pickands(base.structure(), H, "abs_excursion_asymptotic");
  return 2.0 * gaussian_excursion_formula(base.structure(), h, energy_integral(L, base, resolution), u);
}

/// Leading term of P(sup_L ||X|| > u) for a p-variate field. p = 1 is the |X| case.
inline double chi_excursion_asymptotic(const Manifold& L, const CovarianceModel& m, int p, double u,
                                       int resolution = 256, std::optional<double> H = std::nullopt) {
  detail::check_u(u, "chi_excursion_asymptotic");
  if (m.family() == KernelFamily::powered_exponential) throw Error("chi_excursion_asymptotic: model must be a vector field");
  if (m.p() != p) throw Error("chi_excursion_asymptotic: p differs from the model's p");
  if (p == 1 && m.family() == KernelFamily::chi_lift) return abs_excursion_asymptotic(L, m.base(), u, resolution, H);
  const Structure base = chi_base_structure(m);
  const double h = detail::resolve_pickands(base, H, "chi_excursion_asymptotic");
  return chi_excursion_formula(base, p, h, chi_energy_integral(L, m, resolution), u);
}

struct ExcursionReport {
  double u = 0.0;
  double asymptotic = 0.0;
  double empirical = 0.0;         // P(max over grid > u)
  double empirical_coarse = 0.0;  // same draws, every other grid point
  double mc_std_error = 0.0;
  std::size_t n_reps = 0;
  std::size_t grid_points = 0;
  double grid_spacing = 0.0;  // largest nearest-neighbour gap
  bool grid_limited = false;  // coarse and full grids differ by more than one standard error

  double ratio() const { return empirical / asymptotic; }
};

struct GridMaxima {
  std::vector<double> full;
  std::vector<double> coarse;
  std::size_t grid_points = 0;
  double grid_spacing = 0.0;
  std::string method;
};

/// Per-replication maxima of a scalar field on pts and on its even-indexed subsample.
inline GridMaxima grid_maxima(const CovarianceModel& m, const std::vector<Vec>& pts, std::size_t n_reps,
                              std::uint64_t seed) {
  if (n_reps < 1) throw Error("grid_maxima: n_reps must be at least 1");
  GaussianSampler gs(covariance_matrix(m, pts), m.describe());
  GridMaxima g;
  g.full.resize(n_reps);
  g.coarse.resize(n_reps);
  g.grid_points = pts.size();
  g.grid_spacing = max_nn_gap(pts);
  g.method = gs.method();
  gs.for_each_rep(n_reps, seed, 0, 1, [&](std::size_t r, const Mat& X) {
    double a = -std::numeric_limits<double>::infinity(), b = a;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      a = std::max(a, X(i, 0));
      if (i % 2 == 0) b = std::max(b, X(i, 0));
    }
    g.full[r] = a;
    g.coarse[r] = b;
  });
  return g;
}

/// Same for max_s ||X(s)|| of a vector field.
inline GridMaxima chi_grid_maxima(const CovarianceModel& m, const std::vector<Vec>& pts, std::size_t n_reps,
                                  std::uint64_t seed) {
  if (n_reps < 1) throw Error("chi_grid_maxima: n_reps must be at least 1");
  VectorFieldSampler vs(m, pts);
  GridMaxima g;
  g.full.resize(n_reps);
  g.coarse.resize(n_reps);
  g.grid_points = pts.size();
  g.grid_spacing = max_nn_gap(pts);
  g.method = "vector";
  vs.for_each_rep(n_reps, seed, [&](std::size_t r, const Mat& X) {
    double a = 0.0, b = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double v = X.row(i).norm();
      a = std::max(a, v);
      if (i % 2 == 0) b = std::max(b, v);
    }
    g.full[r] = a;
    g.coarse[r] = b;
  });
  return g;
}

inline ExcursionReport excursion_report(const GridMaxima& g, double u, double asymptotic) {
  ExcursionReport rep;
  rep.u = u;
  rep.asymptotic = asymptotic;
  rep.n_reps = g.full.size();
  rep.grid_points = g.grid_points;
  rep.grid_spacing = g.grid_spacing;
  std::size_t k = 0, kc = 0;
  for (std::size_t r = 0; r < g.full.size(); ++r) {
    k += g.full[r] > u;
    kc += g.coarse[r] > u;
  }
  const double n = static_cast<double>(rep.n_reps);
  rep.empirical = k / n;
  rep.empirical_coarse = kc / n;
  rep.mc_std_error = std::sqrt(rep.empirical * (1.0 - rep.empirical) / n);
  rep.grid_limited = rep.empirical - rep.empirical_coarse > rep.mc_std_error;
  return rep;
}

/*!
 * Monte Carlo P(max over M.sample(grid_resolution) > u) for each u, from one
 * set of draws, with the matching closed form (asymptotic is 0 for u <= 1).
 */
inline std::vector<ExcursionReport> empirical_excursion(const Manifold& M, const CovarianceModel& m,
                                                        const std::vector<double>& us, std::size_t n_reps,
                                                        int grid_resolution, std::uint64_t seed,
                                                        std::optional<double> H = std::nullopt,
                                                        int quad_resolution = 256) {
  const auto g = grid_maxima(m, M.sample(grid_resolution), n_reps, seed);
  std::optional<double> I;
  std::vector<ExcursionReport> out;
  for (double u : us) {
    double asym = 0.0;
    if (u > 1.0) {
      if (!I) I = energy_integral(M, m, quad_resolution);
      asym = gaussian_excursion_formula(m.structure(), detail::resolve_pickands(m.structure(), H, "empirical_excursion"),
                                        *I, u);
    }
    out.push_back(excursion_report(g, u, asym));
  }
  return out;
}

inline ExcursionReport empirical_excursion(const Manifold& M, const CovarianceModel& m, double u, std::size_t n_reps,
                                           int grid_resolution, std::uint64_t seed,
                                           std::optional<double> H = std::nullopt) {
  return empirical_excursion(M, m, std::vector<double>{u}, n_reps, grid_resolution, seed, H).front();
}

/// Chi-field version: P(max_s ||X(s)|| > u) on L.sample(grid_resolution).
inline std::vector<ExcursionReport> empirical_chi_excursion(const Manifold& L, const CovarianceModel& m,
                                                            const std::vector<double>& us, std::size_t n_reps,
                                                            int grid_resolution, std::uint64_t seed,
                                                            std::optional<double> H = std::nullopt,
                                                            int quad_resolution = 128) {
  const auto g = chi_grid_maxima(m, L.sample(grid_resolution), n_reps, seed);
  std::vector<ExcursionReport> out;
  for (double u : us)
    out.push_back(excursion_report(g, u, u > 1.0 ? chi_excursion_asymptotic(L, m, m.p(), u, quad_resolution, H) : 0.0));
  return out;
}

struct BonferroniReport {
  double u = 0.0;
  double whole = 0.0;     // P(max over the grid > u)
  double cell_sum = 0.0;  // sum over Voronoi cells of P(max over the cell > u)
  std::vector<double> cells;
  bool ok() const { return cell_sum >= whole; }
};

/*!
 * Union bound over the restricted Voronoi cells of an eps-net: the grid is
 * partitioned by nearest net point and each cell's exceedance frequency is
 * counted on the same draws as the whole-grid frequency.
 */
inline BonferroniReport cellwise_bonferroni(const Manifold& M, const CovarianceModel& m, double u, std::size_t n_reps,
                                            int grid_resolution, std::uint64_t seed, double epsilon,
                                            int candidate_resolution) {
  const auto pts = M.sample(grid_resolution);
  const auto net = build_epsilon_net(M, epsilon, candidate_resolution);
  const auto vor = restricted_voronoi(net, pts);
  const std::size_t K = net.points.size();
  GaussianSampler gs(covariance_matrix(m, pts), m.describe());
  std::vector<std::vector<unsigned char>> hit(n_reps, std::vector<unsigned char>(K + 1, 0));
  gs.for_each_rep(n_reps, seed, 0, 1, [&](std::size_t r, const Mat& X) {
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      if (X(i, 0) > u) {
        hit[r][vor.assignment[static_cast<std::size_t>(i)]] = 1;
        hit[r][K] = 1;
      }
  });
  BonferroniReport rep;
  rep.u = u;
  rep.cells.assign(K, 0.0);
  for (const auto& h : hit) {
    for (std::size_t c = 0; c < K; ++c) rep.cells[c] += h[c];
    rep.whole += h[K];
  }
  const double n = static_cast<double>(n_reps);
  rep.whole /= n;
  for (auto& c : rep.cells) {
    c /= n;
    rep.cell_sum += c;
  }
  return rep;
}

}  // namespace mext
