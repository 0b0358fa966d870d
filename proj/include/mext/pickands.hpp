#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mext/core_math.hpp"
#include "mext/field_sim.hpp"

namespace mext {

enum class PickandsMethod {
  ratio,      // E[max e^W / (gamma^n sum e^W)] over gamma Z^n cap [-T,T]^n
  truncated,  // E[exp(max_{C} W)] / T^n over the one-sided grid C = {0, gamma, ..}^n
};

inline const char* to_string(PickandsMethod m) { return m == PickandsMethod::ratio ? "ratio" : "truncated"; }

struct PickandsEstimate {
  Structure structure;
  double T = 0.0;
  double gamma = 0.0;
  std::size_t n_reps = 0;
  std::size_t excluded = 0;
  double estimate = 0.0;
  double std_error = 0.0;
  PickandsMethod method = PickandsMethod::ratio;
  std::vector<std::size_t> block_grid_points;
};

/// Known values: alpha = 2 (any r) and r = 1, alpha = 1.
inline std::optional<double> pickands_closed_form(int r, double alpha) {
  if (r < 0) return std::nullopt;
  if (alpha == 2.0) return std::pow(kPi, -0.5 * r);
  if (r == 1 && alpha == 1.0) return 1.0;
  if (r == 0) return 1.0;
  return std::nullopt;
}

/// H_{R,alpha} as the product of per-block closed forms, if all are known.
inline std::optional<double> pickands_closed_form(const Structure& s) {
  double h = 1.0;
  for (int i = 0; i < s.blocks(); ++i) {
    auto v = pickands_closed_form(s.manifold_dim(i), s.exponent(i));
    if (!v) return std::nullopt;
    h *= *v;
  }
  return h;
}

namespace detail {

// Integer lattice {k0..k1}^e scaled by gamma.
inline std::vector<Vec> lattice(int e, int k0, int k1, double gamma) {
  const std::size_t side = static_cast<std::size_t>(k1 - k0 + 1);
  std::size_t total = 1;
  for (int i = 0; i < e; ++i) {
    total *= side;
    check_grid_size(total);
  }
  std::vector<Vec> pts;
  pts.reserve(total);
  std::vector<int> idx(e, k0);
  for (std::size_t c = 0; c < total; ++c) {
    Vec x(e);
    for (int i = 0; i < e; ++i) x(i) = gamma * idx[i];
    pts.push_back(x);
    for (int i = e - 1; i >= 0; --i) {
      if (++idx[i] <= k1) break;
      idx[i] = k0;
    }
  }
  return pts;
}

struct PickandsBlock {
  std::vector<Vec> points;
  Vec mean;
  Mat cov;
};

inline PickandsBlock pickands_block(int e, double alpha, int k0, int k1, double gamma) {
  PickandsBlock b;
  b.points = lattice(e, k0, k1, gamma);
  const auto N = static_cast<Eigen::Index>(b.points.size());
  Vec nrm(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double r = b.points[i].norm();
    nrm(i) = r > 0.0 ? std::pow(r, alpha) : 0.0;
  }
  b.mean = -nrm;
  b.cov.resize(N, N);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double d = (b.points[i] - b.points[j]).norm();
      b.cov(i, j) = b.cov(j, i) = nrm(i) + nrm(j) - (d > 0.0 ? std::pow(d, alpha) : 0.0);
    }
  return b;
}

inline void check_pickands_inputs(const Structure& s, double T, double gamma, std::size_t n_reps) {
  Violations v;
  v.check(T > 0.0, "T must be positive");
  v.check(gamma > 0.0, "gamma must be positive");
  v.check(gamma <= T, "gamma must not exceed T");
  v.check(n_reps >= 1, "n_reps must be at least 1");
  for (int i = 0; i < s.blocks(); ++i) v.check(s.exponent(i) <= 2.0, "all alpha_i must be <= 2");
  v.throw_if_any("pickands");
}

inline int steps(double T, double gamma) { return static_cast<int>(std::ceil(T / gamma - 1e-9)); }

}  // namespace detail

struct PickandsTrajectories {
  std::vector<Vec> points;  // grid C(ceil(T/gamma), gamma), first block varying slowest
  Mat values;               // n_reps x n_points
};

/*!
 * Draws of W on the one-sided grid {0, gamma, .., ceil(T/gamma) gamma}^n.
 * Blocks are independent and W is the sum of the per-block fields.
 */
inline PickandsTrajectories simulate_pickands_field(const Structure& s, double T, double gamma,
                                                    std::size_t n_reps, std::uint64_t seed) {
  detail::check_pickands_inputs(s, T, gamma, n_reps);
  const int K = detail::steps(T, gamma);
  std::vector<detail::PickandsBlock> blocks;
  for (int b = 0; b < s.blocks(); ++b) blocks.push_back(detail::pickands_block(s.block_size(b), s.exponent(b), 0, K, gamma));
  std::size_t total = 1;
  for (auto& b : blocks) {
    total *= b.points.size();
    detail::check_grid_size(total);
  }

  PickandsTrajectories out;
  out.values = Mat::Zero(static_cast<Eigen::Index>(n_reps), static_cast<Eigen::Index>(total));
  std::vector<std::size_t> stride(blocks.size(), 1);
  for (int b = static_cast<int>(blocks.size()) - 2; b >= 0; --b) stride[b] = stride[b + 1] * blocks[b + 1].points.size();

  for (std::size_t c = 0; c < total; ++c) {
    Vec x(s.dim());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const std::size_t ib = (c / stride[b]) % blocks[b].points.size();
      x.segment(s.offset(static_cast<int>(b)), s.block_size(static_cast<int>(b))) = blocks[b].points[ib];
    }
    out.points.push_back(x);
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    GaussianSampler gs(blocks[b].cov, "pickands field");
    const auto& mu = blocks[b].mean;
    gs.for_each_rep(n_reps, seed, b, 1, [&](std::size_t r, const Mat& X) {
      for (std::size_t c = 0; c < total; ++c) {
        const auto ib = static_cast<Eigen::Index>((c / stride[b]) % blocks[b].points.size());
        out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) += X(ib, 0) + mu(ib);
      }
    });
  }
  return out;
}

/*!
 * Monte Carlo estimate of the Pickands constant.
 *
 * ratio: per block, max_j e^{W_j} / (gamma^{e} sum_j e^{W_j}) over the
 *   two-sided lattice gamma Z^e cap [-T,T]^e; blocks multiply. Its mean is
 *   the discrete constant H(gamma)/gamma^n up to window truncation.
 * truncated: exp(sum_b max W_b) / T^n on the one-sided lattice, with
 *   replications whose exponent overflows excluded (at most 0.1%).
 */
inline PickandsEstimate estimate_pickands(const Structure& s, double T, double gamma, std::size_t n_reps,
                                          std::uint64_t seed, PickandsMethod method = PickandsMethod::ratio) {
  detail::check_pickands_inputs(s, T, gamma, n_reps);
  const int K = detail::steps(T, gamma);
  PickandsEstimate est;
  est.structure = s;
  est.T = T;
  est.gamma = gamma;
  est.n_reps = n_reps;
  est.method = method;

  // per-rep log contribution, summed over blocks
  std::vector<double> logv(n_reps, 0.0);
  for (int b = 0; b < s.blocks(); ++b) {
    const int k0 = method == PickandsMethod::ratio ? -K : 0;
    auto blk = detail::pickands_block(s.block_size(b), s.exponent(b), k0, K, gamma);
    est.block_grid_points.push_back(blk.points.size());
    GaussianSampler gs(blk.cov, "pickands field");
    const double log_cell = s.block_size(b) * std::log(gamma);
    gs.for_each_rep(n_reps, seed, static_cast<std::uint64_t>(b), 1, [&](std::size_t r, const Mat& X) {
      const Vec w = X.col(0) + blk.mean;
      const double mx = w.maxCoeff();
      if (method == PickandsMethod::ratio) {
        const double lse = mx + std::log((w.array() - mx).exp().sum());
        logv[r] += mx - lse - log_cell;
      } else {
        logv[r] += mx;
      }
    });
  }

  const double norm = method == PickandsMethod::ratio ? 1.0 : std::pow(T, s.dim());
  double sum = 0.0, sum2 = 0.0;
  std::size_t used = 0;
  for (double lv : logv) {
    if (!(lv < 700.0)) {
      ++est.excluded;
      continue;
    }
    const double v = std::exp(lv) / norm;
    sum += v;
    sum2 += v * v;
    ++used;
  }
  if (static_cast<double>(est.excluded) > 0.001 * static_cast<double>(n_reps)) {
    std::ostringstream os;
    os << "estimate_pickands: " << est.excluded << " of " << n_reps
       << " replications overflowed exp(sup W), above the 0.1% limit";
    throw Error(os.str());
  }
  if (used == 0) throw Error("estimate_pickands: no usable replications");
  est.estimate = sum / used;
  const double var = used > 1 ? (sum2 - used * est.estimate * est.estimate) / (used - 1) : 0.0;
  est.std_error = std::sqrt(std::max(0.0, var) / used);
  if (!(est.estimate > 0.0) || !std::isfinite(est.estimate)) throw Error("estimate_pickands: non-finite estimate");
  return est;
}

/*!
 * E[exp(max W)] / T^n on nested sub-grids of one fine simulation: stride k
 * keeps every k-th lattice index. Per replication the maximum can only grow
 * as the stride shrinks, so the estimates are monotone in refinement.
 */
inline std::vector<PickandsEstimate> pickands_nested_refinement(const Structure& s, double T, double gamma,
                                                                const std::vector<int>& strides,
                                                                std::size_t n_reps, std::uint64_t seed) {
  if (s.blocks() != 1 || s.block_size(0) != 1) throw Unsupported("nested refinement supports n = 1 only");
  auto tr = simulate_pickands_field(s, T, gamma, n_reps, seed);
  std::vector<PickandsEstimate> out;
  for (int k : strides) {
    if (k < 1) throw Error("stride must be positive");
    PickandsEstimate e;
    e.structure = s;
    e.T = T;
    e.gamma = gamma * k;
    e.n_reps = n_reps;
    e.method = PickandsMethod::truncated;
    double sum = 0.0, sum2 = 0.0;
    for (Eigen::Index r = 0; r < tr.values.rows(); ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < tr.values.cols(); c += k) mx = std::max(mx, tr.values(r, c));
      const double v = std::exp(mx) / T;
      sum += v;
      sum2 += v * v;
    }
    e.estimate = sum / n_reps;
    e.std_error = std::sqrt(std::max(0.0, sum2 / n_reps - e.estimate * e.estimate) / n_reps);
    e.block_grid_points = {static_cast<std::size_t>((tr.values.cols() - 1) / k + 1)};
    out.push_back(e);
  }
  return out;
}

/*!
 * Discrete alpha = 1 constant H_1(delta)/delta on the lattice delta Z, from
 * the random-walk representation (Spitzer's identity):
 * delta^{-1} exp(-2 sum_k Phibar(sqrt(k delta / 2)) / k).
 */
inline double pickands_discrete_alpha1(double delta, double tol = 1e-14) {
  if (!(delta > 0.0)) throw Error("pickands_discrete_alpha1: delta must be positive");
  double acc = 0.0;
  for (long k = 1;; ++k) {
    const double term = normal_sf(std::sqrt(k * delta / 2.0)) / k;
    acc += term;
    if (term < tol * acc || k > 100000000) break;
  }
  return std::exp(-2.0 * acc) / delta;
}

}  // namespace mext
