#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "mext/error.hpp"

namespace mext {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;

/*!
 * Block structure (E, alpha) of R^n with per-block manifold dimensions.
 * Block i covers coordinates offset(i) .. offset(i) + block_size(i) - 1.
 */
class Structure {
 public:
  Structure() = default;

  Structure(std::vector<int> block_sizes, std::vector<double> exponents,
            std::vector<int> manifold_dims = {})
      : e_(std::move(block_sizes)), alpha_(std::move(exponents)), r_(std::move(manifold_dims)) {
    if (r_.empty()) r_ = e_;
    Violations v = validate(e_, alpha_, r_);
    v.throw_if_any("invalid structure");
    off_.resize(e_.size() + 1, 0);
    for (std::size_t i = 0; i < e_.size(); ++i) off_[i + 1] = off_[i] + e_[i];
  }

  static Structure single(int n, double alpha, int r = -1) {
    return Structure({n}, {alpha}, {r < 0 ? n : r});
  }

  static Violations validate(const std::vector<int>& e, const std::vector<double>& alpha,
                             const std::vector<int>& r) {
    Violations v;
    v.check(!e.empty(), "structure needs k >= 1 blocks");
    v.check(e.size() == alpha.size(), "block_sizes and exponents differ in length");
    v.check(r.empty() || r.size() == e.size(), "manifold_dims and block_sizes differ in length");
    for (std::size_t i = 0; i < e.size(); ++i) {
      std::ostringstream os;
      os << "block " << i << ": ";
      v.check(e[i] >= 1, os.str() + "block size e_i must be positive");
      if (i < alpha.size())
        v.check(alpha[i] > 0.0 && alpha[i] <= 2.0,
                os.str() + "α_i ∈ (0,2] violated (alpha = " + num(alpha[i]) + ")");
      if (i < r.size())
        v.check(r[i] >= 0 && r[i] <= e[i], os.str() + "manifold dim r_i must satisfy 0 <= r_i <= e_i");
    }
    return v;
  }

  int blocks() const { return static_cast<int>(e_.size()); }
  int dim() const { return off_.empty() ? 0 : off_.back(); }
  int block_size(int i) const { return e_[i]; }
  int offset(int i) const { return off_[i]; }
  double exponent(int i) const { return alpha_[i]; }
  int manifold_dim(int i) const { return r_[i]; }
  int intrinsic_dim() const { return std::accumulate(r_.begin(), r_.end(), 0); }

  const std::vector<int>& block_sizes() const { return e_; }
  const std::vector<double>& exponents() const { return alpha_; }
  const std::vector<int>& manifold_dims() const { return r_; }

 private:
  static std::string num(double x) {
    std::ostringstream os;
    os << x;
    return os.str();
  }

  std::vector<int> e_;
  std::vector<double> alpha_;
  std::vector<int> r_;
  std::vector<int> off_;
};

/// |t|_{E,alpha} = sum_i ||t_(i)||^{alpha_i}
template <class Derived>
double structure_module(const Eigen::MatrixBase<Derived>& t, const Structure& s) {
  if (t.size() != s.dim()) {
    std::ostringstream os;
    os << "structure_module: vector has length " << t.size() << ", structure has n = " << s.dim();
    throw Error(os.str());
  }
  double acc = 0.0;
  for (int i = 0; i < s.blocks(); ++i) {
    double nrm = t.segment(s.offset(i), s.block_size(i)).norm();
    if (nrm > 0.0) acc += std::pow(nrm, s.exponent(i));
  }
  return acc;
}

inline double structure_module(const std::vector<double>& t, const Structure& s) {
  return structure_module(Eigen::Map<const Vec>(t.data(), static_cast<Eigen::Index>(t.size())), s);
}

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }

/// Upper tail 1 - Phi(x).
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Psi(u) = phi(u) / u
inline double mills_psi(double u) {
  if (!(u > 0.0)) throw Error("mills_psi: u must be positive");
  return normal_pdf(u) / u;
}

/// ||G||_m via sqrt(det(G^T G)), computed from the R factor of a QR decomposition.
inline double minor_norm(const Mat& G) {
  const auto n = G.rows(), m = G.cols();
  if (m < 1) throw Error("minor_norm: G needs at least one column");
  if (m > n) throw Error("minor_norm: order m exceeds row count n");
  Eigen::HouseholderQR<Mat> qr(G);
  double prod = 1.0;
  for (Eigen::Index i = 0; i < m; ++i) prod *= std::abs(qr.matrixQR()(i, i));
  return prod;
}

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double b = 1.0;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return std::round(b);
}

/// ||G||_m by summing squared m x m minors. Test route; binomial(n,m) is capped at 200.
inline double minor_norm_enumerate(const Mat& G) {
  const int n = static_cast<int>(G.rows()), m = static_cast<int>(G.cols());
  if (m < 1) throw Error("minor_norm_enumerate: G needs at least one column");
  if (m > n) throw Error("minor_norm_enumerate: order m exceeds row count n");
  if (binomial(n, m) > 200) throw Error("minor_norm_enumerate: more than 200 minors, use minor_norm");

  std::vector<int> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  Mat sub(m, m);
  double acc = 0.0;
  while (true) {
    for (int a = 0; a < m; ++a) sub.row(a) = G.row(idx[a]);
    double d = sub.determinant();
    acc += d * d;
    int j = m - 1;
    while (j >= 0 && idx[j] == n - m + j) --j;
    if (j < 0) break;
    ++idx[j];
    for (int a = j + 1; a < m; ++a) idx[a] = idx[a - 1] + 1;
  }
  return std::sqrt(acc);
}

/// z with exp(-exp(-z)) = 1 - alpha.
inline double gumbel_quantile(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("gumbel_quantile: alpha must lie in (0,1)");
  return -std::log(-std::log1p(-alpha));
}

inline double gumbel_cdf(double z) { return std::exp(-std::exp(-z)); }

/// Volume of the unit ball in R^r.
inline double unit_ball_volume(int r) {
  return std::pow(kPi, 0.5 * r) / std::tgamma(0.5 * r + 1.0);
}

/// Surface area of S^{p-1} in R^p.
inline double sphere_area(int p) { return 2.0 * std::pow(kPi, 0.5 * p) / std::tgamma(0.5 * p); }

}  // namespace mext
