#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "mext/core_math.hpp"
#include "mext/manifold.hpp"
#include "mext/parallel.hpp"
#include "mext/rng.hpp"

namespace mext {

enum class KernelFamily { powered_exponential, chi_lift, custom_crosscov };

inline const char* to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::powered_exponential: return "powered_exponential";
    case KernelFamily::chi_lift: return "chi_lift";
    case KernelFamily::custom_crosscov: return "custom_crosscov";
  }
  return "?";
}

/// Hard cap on grid sizes handled by the dense sampler.
inline constexpr std::size_t kMaxGridPoints = 4096;

/*!
 * Locally stationary unit-variance kernel.
 *
 * powered_exponential: r(t,s) = exp(-|D_m (t'-s')|_{E,alpha}), t' = xi_h^{-1} t
 *   (block 1 divided by h), D_m = D evaluated at the ambient midpoint of t, s.
 * chi_lift: kernel of Y(s,v) = sum_i X_i(s) v_i for i.i.d. copies X_i of a
 *   powered_exponential base, r = r_X(s1,s2) v1^T v2. Points are (s, v).
 * custom_crosscov: p-variate field X = sum_k W_k^{1/2} Z_k where Z_k holds p
 *   i.i.d. copies of a scalar field with kernel exp(-u^T S_k u) and
 *   sum_k W_k = I. Its lift has r = v1^T C(s1,s2) v2 with
 *   C(s1,s2) = sum_k W_k rho_k(s1,s2) and cross matrices A^{ij} = sum_k (W_k)_ij S_k.
 */
class CovarianceModel {
 public:
  using DField = std::function<Mat(const Vec&)>;

  static CovarianceModel powered_exponential(const Structure& s, DField D, double rescale_h = 1.0) {
    check_h(rescale_h);
    CovarianceModel m;
    m.family_ = KernelFamily::powered_exponential;
    m.s_ = s;
    m.dfield_ = std::move(D);
    m.h_ = rescale_h;
    m.label_ = "powered_exponential";
    return m;
  }

  static CovarianceModel powered_exponential(const Structure& s, const Mat& D, double rescale_h = 1.0) {
    if (D.rows() != s.dim() || D.cols() != s.dim())
      throw Error("powered_exponential: D must be n x n for the structure");
    check_block_diagonal(D, s);
    auto m = powered_exponential(s, DField([D](const Vec&) { return D; }), rescale_h);
    m.const_D_ = D;
    std::ostringstream os;
    os << "powered_exponential(alpha=";
    for (int i = 0; i < s.blocks(); ++i) os << (i ? "," : "") << s.exponent(i);
    os << ", D const, h=" << rescale_h << ")";
    m.label_ = os.str();
    return m;
  }

  /// Isotropic stationary kernel exp(-(c ||u||)^alpha) on R^n, one block.
  static CovarianceModel isotropic(int n, double alpha, double c, double rescale_h = 1.0, int r = -1) {
    return powered_exponential(Structure::single(n, alpha, r), Mat(c * Mat::Identity(n, n)), rescale_h);
  }

  static CovarianceModel chi_lift(const CovarianceModel& base, int p) {
    if (base.family_ != KernelFamily::powered_exponential)
      throw Error("chi_lift: base kernel must be powered_exponential");
    if (p < 1) throw Error("chi_lift: p must be at least 1");
    CovarianceModel m;
    m.family_ = KernelFamily::chi_lift;
    m.base_ = std::make_shared<const CovarianceModel>(base);
    m.p_ = p;
    m.s_ = lifted_structure(base.s_, p);
    m.h_ = base.h_;
    m.label_ = "chi_lift(p=" + std::to_string(p) + ", " + base.label_ + ")";
    return m;
  }

  static CovarianceModel custom_crosscov(std::vector<Mat> W, std::vector<Mat> S, double rescale_h = 1.0,
                                         int manifold_dim = -1) {
    check_h(rescale_h);
    Violations v;
    v.check(!W.empty() && W.size() == S.size(), "custom_crosscov: need matching nonempty W and S lists");
    if (!v.empty()) v.throw_if_any("custom_crosscov");
    const auto p = W[0].rows(), n = S[0].rows();
    Mat sumW = Mat::Zero(p, p);
    for (std::size_t k = 0; k < W.size(); ++k) {
      v.check(W[k].rows() == p && W[k].cols() == p, "W_k must all be p x p");
      v.check(S[k].rows() == n && S[k].cols() == n, "S_k must all be n x n");
      if (!v.empty()) break;
      v.check((W[k] - W[k].transpose()).norm() < 1e-12, "W_k must be symmetric");
      v.check((S[k] - S[k].transpose()).norm() < 1e-12, "S_k must be symmetric");
      Eigen::SelfAdjointEigenSolver<Mat> ew(W[k]), es(S[k]);
      v.check(ew.eigenvalues().minCoeff() >= -1e-12, "W_k must be positive semidefinite");
      v.check(es.eigenvalues().minCoeff() > 0.0, "S_k must be positive definite");
      sumW += W[k];
    }
    if (v.empty()) v.check((sumW - Mat::Identity(p, p)).norm() < 1e-10, "sum_k W_k must equal the identity");
    v.throw_if_any("custom_crosscov");

    CovarianceModel m;
    m.family_ = KernelFamily::custom_crosscov;
    m.p_ = static_cast<int>(p);
    m.h_ = rescale_h;
    m.W_ = std::move(W);
    m.S_ = std::move(S);
    const int nn = static_cast<int>(n);
    m.s_ = lifted_structure(Structure({nn}, {2.0}, {manifold_dim < 0 ? nn : manifold_dim}), m.p_);
    m.A_.assign(p * p, Mat::Zero(n, n));
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = 0; j < p; ++j)
        for (std::size_t k = 0; k < m.W_.size(); ++k) m.A_[i * p + j] += m.W_[k](i, j) * m.S_[k];
    if (!m.dominance_ok()) throw Error("custom_crosscov: " + m.dominance_report());
    for (auto& Wk : m.W_) {
      Eigen::SelfAdjointEigenSolver<Mat> es(Wk);
      m.Whalf_.push_back(es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                         es.eigenvectors().transpose());
    }
    m.label_ = "custom_crosscov(p=" + std::to_string(p) + ", K=" + std::to_string(m.W_.size()) + ")";
    return m;
  }

  KernelFamily family() const { return family_; }
  const Structure& structure() const { return s_; }
  double rescale_h() const { return h_; }
  int p() const { return p_; }
  const std::string& describe() const { return label_; }
  const CovarianceModel& base() const { return *base_; }
  bool constant_D() const { return const_D_.size() > 0; }
  const std::vector<Mat>& W() const { return W_; }
  const std::vector<Mat>& S() const { return S_; }
  const std::vector<Mat>& W_half() const { return Whalf_; }

  /// Dimension of the location part s (points of the vector field).
  int location_dim() const {
    switch (family_) {
      case KernelFamily::powered_exponential: return s_.dim();
      case KernelFamily::chi_lift: return base_->s_.dim();
      case KernelFamily::custom_crosscov: return static_cast<int>(S_[0].rows());
    }
    return 0;
  }

  /// Cross matrix A^{ij} of the custom family.
  const Mat& cross_matrix(int i, int j) const { return A_[static_cast<std::size_t>(i * p_ + j)]; }

  /// lambda_min(A^{ii}) > sum_{j != i} |lambda_min(A^{ij})| for every i.
  bool dominance_ok() const {
    if (family_ != KernelFamily::custom_crosscov) return true;
    for (int i = 0; i < p_; ++i) {
      double off = 0.0;
      for (int j = 0; j < p_; ++j)
        if (j != i) off += std::abs(lambda_min(cross_matrix(i, j)));
      if (!(lambda_min(cross_matrix(i, i)) > off)) return false;
    }
    return true;
  }

  std::string dominance_report() const {
    std::ostringstream os;
    for (int i = 0; i < p_; ++i) {
      double off = 0.0;
      for (int j = 0; j < p_; ++j)
        if (j != i) off += std::abs(lambda_min(cross_matrix(i, j)));
      const double d = lambda_min(cross_matrix(i, i));
      if (!(d > off))
        os << "dominance fails for component " << i << ": lambda_min(A^{ii}) = " << d
           << " <= sum |lambda_min(A^{ij})| = " << off << "; ";
    }
    return os.str();
  }

  /// t' = xi_h^{-1} t: block 1 of the location part divided by h.
  Vec rescale(const Vec& t) const {
    Vec out = t;
    if (h_ != 1.0) {
      const Structure& ls = location_structure();
      out.segment(ls.offset(0), ls.block_size(0)) /= h_;
    }
    return out;
  }

  /// D_t of the local expansion, in rescaled coordinates. For lifted families
  /// this is diag(B_t, I/sqrt(2)).
  Mat D(const Vec& t) const {
    switch (family_) {
      case KernelFamily::powered_exponential: return constant_D() ? const_D_ : dfield_(t);
      case KernelFamily::chi_lift: {
        const int n = base_->s_.dim();
        Mat out = Mat::Zero(n + p_, n + p_);
        out.topLeftCorner(n, n) = base_->D(t.head(n));
        out.bottomRightCorner(p_, p_) = Mat::Identity(p_, p_) / std::numbers::sqrt2;
        return out;
      }
      case KernelFamily::custom_crosscov: {
        const int n = location_dim();
        const Vec v = t.tail(p_);
        Mat A = Mat::Zero(n, n);
        for (int i = 0; i < p_; ++i)
          for (int j = 0; j < p_; ++j) A += v(i) * v(j) * cross_matrix(i, j);
        Eigen::SelfAdjointEigenSolver<Mat> es(A);
        Mat out = Mat::Zero(n + p_, n + p_);
        out.topLeftCorner(n, n) = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                                  es.eigenvectors().transpose();
        out.bottomRightCorner(p_, p_) = Mat::Identity(p_, p_) / std::numbers::sqrt2;
        return out;
      }
    }
    return {};
  }

  /// Scalar kernel r(t1, t2). For lifted families t = (s, v).
  double operator()(const Vec& t1, const Vec& t2) const {
    switch (family_) {
      case KernelFamily::powered_exponential: {
        const Mat Dm = constant_D() ? const_D_ : dfield_(0.5 * (t1 + t2));
        return std::exp(-structure_module(Dm * (rescale(t1) - rescale(t2)), s_));
      }
      case KernelFamily::chi_lift: {
        const int n = base_->s_.dim();
        return (*base_)(t1.head(n), t2.head(n)) * t1.tail(p_).dot(t2.tail(p_));
      }
      case KernelFamily::custom_crosscov: {
        const int n = location_dim();
        return t1.tail(p_).dot(cross_cov(t1.head(n), t2.head(n)) * t2.tail(p_));
      }
    }
    return 0.0;
  }

  /// p x p cross-covariance Cov(X(s1), X(s2)) of the underlying vector field.
  Mat cross_cov(const Vec& s1, const Vec& s2) const {
    switch (family_) {
      case KernelFamily::powered_exponential: return Mat::Constant(1, 1, (*this)(s1, s2));
      case KernelFamily::chi_lift: return (*base_)(s1, s2) * Mat::Identity(p_, p_);
      case KernelFamily::custom_crosscov: {
        Mat C = Mat::Zero(p_, p_);
        for (std::size_t k = 0; k < W_.size(); ++k) C += W_[k] * component_kernel(k, s1, s2);
        return C;
      }
    }
    return {};
  }

  /// rho_k(s1, s2) = exp(-u'^T S_k u'), u' = xi_h^{-1}(s1 - s2).
  double component_kernel(std::size_t k, const Vec& s1, const Vec& s2) const {
    const Vec u = rescale_location(s1 - s2);
    return std::exp(-u.dot(S_[k] * u));
  }

  const Structure& location_structure() const {
    return family_ == KernelFamily::chi_lift ? base_->s_ : s_;
  }

 private:
  CovarianceModel() = default;

  static void check_h(double h) {
    if (!(h > 0.0 && h <= 1.0)) throw Error("rescale_h must lie in (0,1]");
  }

  static void check_block_diagonal(const Mat& D, const Structure& s) {
    for (int i = 0; i < s.blocks(); ++i)
      for (int j = 0; j < s.blocks(); ++j)
        if (i != j &&
            D.block(s.offset(i), s.offset(j), s.block_size(i), s.block_size(j)).cwiseAbs().maxCoeff() > 0.0)
          throw Error("D must be block diagonal for the structure");
    if (std::abs(D.determinant()) < 1e-300) throw Error("D must be nonsingular");
  }

  static Structure lifted_structure(const Structure& b, int p) {
    auto e = b.block_sizes();
    auto a = b.exponents();
    auto r = b.manifold_dims();
    e.push_back(p);
    a.push_back(2.0);
    r.push_back(p - 1);
    return Structure(e, a, r);
  }

  static double lambda_min(const Mat& A) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  Vec rescale_location(const Vec& u) const {
    if (h_ == 1.0) return u;
    Vec out = u;
    out /= h_;  // the custom family has a single location block
    return out;
  }

  KernelFamily family_ = KernelFamily::powered_exponential;
  Structure s_;
  DField dfield_;
  Mat const_D_;
  double h_ = 1.0;
  int p_ = 0;
  std::shared_ptr<const CovarianceModel> base_;
  std::vector<Mat> W_, S_, Whalf_, A_;
  std::string label_;
};

struct CovarianceMatrix {
  Mat sigma;
  Mat chol;  // lower Cholesky factor when the Cholesky route succeeded, else empty
  double jitter = 0.0;
  double min_eigenvalue = std::numeric_limits<double>::quiet_NaN();  // only set when Cholesky failed
};

namespace detail {

inline void check_grid_size(std::size_t n) {
  if (n > kMaxGridPoints) {
    std::ostringstream os;
    os << "grid has " << n << " points, above the exact-sampling cap of " << kMaxGridPoints
       << "; raise h or gamma, or lower the resolution";
    throw Error(os.str());
  }
}

// Symmetric fill of the model kernel, using a precomputed transform for constant D.
inline Mat kernel_matrix(const CovarianceModel& m, const std::vector<Vec>& pts) {
  const auto N = static_cast<Eigen::Index>(pts.size());
  Mat K(N, N);
  if (m.family() == KernelFamily::powered_exponential && m.constant_D()) {
    const Mat D = m.D(pts[0]);
    std::vector<Vec> y(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) y[i] = D * m.rescale(pts[i]);
    const Structure& s = m.structure();
    parallel_for(pts.size(), [&](std::size_t i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double acc = 0.0;
        for (int b = 0; b < s.blocks(); ++b) {
          const double sq = (y[i].segment(s.offset(b), s.block_size(b)) - y[j].segment(s.offset(b), s.block_size(b)))
                                .squaredNorm();
          const double a = s.exponent(b);
          acc += a == 2.0 ? sq : (sq > 0.0 ? std::pow(sq, 0.5 * a) : 0.0);
        }
        K(i, j) = std::exp(-acc);
      }
    });
  } else {
    parallel_for(pts.size(), [&](std::size_t i) {
      for (std::size_t j = 0; j <= i; ++j) K(i, j) = m(pts[i], pts[j]);
    });
  }
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < i; ++j) K(j, i) = K(i, j);
  return K;
}

}  // namespace detail

/*!
 * Covariance of the model on a point set with the jitter policy: Cholesky of
 * the raw matrix first; if that fails the smallest eigenvalue decides between
 * refusal (< -1e-8) and a 1e-10 diagonal jitter.
 */
inline CovarianceMatrix covariance_matrix(const CovarianceModel& m, const std::vector<Vec>& pts) {
  if (pts.empty()) throw Error("covariance_matrix: empty point set");
  detail::check_grid_size(pts.size());
  CovarianceMatrix out;
  out.sigma = detail::kernel_matrix(m, pts);
  Eigen::LLT<Mat> llt(out.sigma);
  if (llt.info() == Eigen::Success) {
    out.chol = llt.matrixL();
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(out.sigma, Eigen::EigenvaluesOnly);
  out.min_eigenvalue = es.eigenvalues().minCoeff();
  if (out.min_eigenvalue < -1e-8) {
    std::ostringstream os;
    os << "invalid kernel " << m.describe() << ": smallest eigenvalue " << out.min_eigenvalue << " < -1e-8";
    throw InvalidKernel(os.str());
  }
  if (out.min_eigenvalue < 1e-10) {
    out.jitter = 1e-10;
    out.sigma.diagonal().array() += out.jitter;
  }
  Eigen::LLT<Mat> llt2(out.sigma);
  if (llt2.info() == Eigen::Success) out.chol = llt2.matrixL();
  return out;
}

/*!
 * Exact sampler for N(0, Sigma). Rows with exactly zero variance are pinned
 * to 0 and left out of the factorization. The factor is Cholesky when
 * possible (with the 1e-10 jitter retry), otherwise a symmetric eigen square
 * root with negative eigenvalues clipped; the clipped mass is reported.
 *
 * Replication i draws its normals from stream(seed, i, block + copy), and
 * replications are processed in fixed batches, so output does not depend on
 * the thread count.
 */
class GaussianSampler {
 public:
  static constexpr std::size_t kBatch = 64;

  explicit GaussianSampler(const Mat& sigma, const std::string& label = "covariance") {
    init(sigma, Mat(), label);
  }

  explicit GaussianSampler(const CovarianceMatrix& c, const std::string& label = "covariance") {
    init(c.sigma, c.chol, label);
    jitter_ = std::max(jitter_, c.jitter);
  }

  std::size_t n_points() const { return n_; }
  std::size_t rank() const { return static_cast<std::size_t>(F_.cols()); }
  const std::string& method() const { return method_; }
  double jitter() const { return jitter_; }
  double clip_mass() const { return clip_mass_; }

  /*!
   * Calls fn(rep, X) for rep in [0, n_reps) where X is n_points x copies and
   * each column is an independent draw. fn may run on several threads but
   * each rep is visited once.
   */
  template <class Fn>
  void for_each_rep(std::size_t n_reps, std::uint64_t seed, std::uint64_t block, int copies, Fn&& fn) const {
    const std::size_t n_batches = (n_reps + kBatch - 1) / kBatch;
    const auto k = F_.cols();
    parallel_for(n_batches, [&](std::size_t b) {
      const std::size_t r0 = b * kBatch, r1 = std::min(n_reps, r0 + kBatch);
      const auto cols = static_cast<Eigen::Index>((r1 - r0) * copies);
      Mat Z(k, cols);
      for (std::size_t r = r0; r < r1; ++r)
        for (int c = 0; c < copies; ++c) {
          Rng g = stream(seed, r, block + static_cast<std::uint64_t>(c));
          const auto col = static_cast<Eigen::Index>((r - r0) * copies + c);
          for (Eigen::Index i = 0; i < k; ++i) Z(i, col) = g.normal();
        }
      Mat Y(F_.rows(), cols);
      Y.noalias() = F_ * Z;
      Mat X = Mat::Zero(static_cast<Eigen::Index>(n_), copies);
      for (std::size_t r = r0; r < r1; ++r) {
        const auto c0 = static_cast<Eigen::Index>((r - r0) * copies);
        for (Eigen::Index a = 0; a < static_cast<Eigen::Index>(active_.size()); ++a)
          for (int c = 0; c < copies; ++c) X(active_[a], c) = Y(a, c0 + c);
        fn(r, static_cast<const Mat&>(X));
      }
    });
  }

 private:
  void init(const Mat& sigma, const Mat& chol, const std::string& label) {
    if (sigma.rows() != sigma.cols() || sigma.rows() == 0) throw Error("sampler: covariance must be square");
    n_ = static_cast<std::size_t>(sigma.rows());
    for (Eigen::Index i = 0; i < sigma.rows(); ++i)
      if (sigma(i, i) != 0.0) active_.push_back(i);
    if (active_.empty()) {
      F_ = Mat::Zero(0, 0);
      method_ = "zero";
      return;
    }
    const auto na = static_cast<Eigen::Index>(active_.size());
    if (chol.size() > 0 && na == sigma.rows()) {
      F_ = chol;
      method_ = "cholesky";
      return;
    }
    Mat S(na, na);
    for (Eigen::Index a = 0; a < na; ++a)
      for (Eigen::Index b = 0; b < na; ++b) S(a, b) = sigma(active_[a], active_[b]);
    Eigen::LLT<Mat> llt(S);
    if (llt.info() == Eigen::Success) {
      F_ = llt.matrixL();
      method_ = "cholesky";
      return;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(S);
    if (es.info() != Eigen::Success) throw Error("sampler: eigen decomposition failed for " + label);
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin > -1e-8) {
      Mat J = S;
      J.diagonal().array() += 1e-10;
      Eigen::LLT<Mat> llt2(J);
      if (llt2.info() == Eigen::Success) {
        F_ = llt2.matrixL();
        jitter_ = 1e-10;
        method_ = "cholesky+jitter";
        return;
      }
    }
    // symmetric square root with clipping
    const Vec& ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      if (ev(i) < 0.0) clip_mass_ += -ev(i);
      if (ev(i) > 1e-14 * scale) keep.push_back(i);
    }
    if (keep.empty()) throw Error("sampler: factorization failed for " + label + " (no positive eigenvalues)");
    F_.resize(na, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c)
      F_.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]) * std::sqrt(ev(keep[c]));
    method_ = "eigen";
  }

  std::size_t n_ = 0;
  std::vector<Eigen::Index> active_;
  Mat F_;
  std::string method_;
  double jitter_ = 0.0;
  double clip_mass_ = 0.0;
};

struct FieldSample {
  std::vector<Vec> points;
  Mat values;  // n_reps x n_points
  std::uint64_t seed = 0;
  std::string method;
  double clip_mass = 0.0;
};

inline FieldSample sample_field(const CovarianceModel& m, const std::vector<Vec>& pts, std::size_t n_reps,
                                std::uint64_t seed) {
  if (n_reps < 1) throw Error("sample_field: n_reps must be at least 1");
  auto cov = covariance_matrix(m, pts);
  GaussianSampler gs(cov, m.describe());
  FieldSample out;
  out.points = pts;
  out.seed = seed;
  out.method = gs.method();
  out.clip_mass = gs.clip_mass();
  out.values.resize(static_cast<Eigen::Index>(n_reps), static_cast<Eigen::Index>(pts.size()));
  gs.for_each_rep(n_reps, seed, 0, 1, [&](std::size_t r, const Mat& X) {
    out.values.row(static_cast<Eigen::Index>(r)) = X.col(0).transpose();
  });
  return out;
}

inline void write_field_csv(std::ostream& os, const FieldSample& f) {
  os << "rep,point_index,value\n";
  os.precision(17);
  for (Eigen::Index r = 0; r < f.values.rows(); ++r)
    for (Eigen::Index i = 0; i < f.values.cols(); ++i) os << r << ',' << i << ',' << f.values(r, i) << '\n';
}

/*!
 * Sampler for the p-variate field X(s) behind a chi_lift or custom_crosscov
 * model on location points s. Each replication yields an N x p matrix.
 */
class VectorFieldSampler {
 public:
  VectorFieldSampler(const CovarianceModel& m, const std::vector<Vec>& locations) : p_(m.p()) {
    if (m.family() == KernelFamily::chi_lift) {
      terms_.push_back(std::make_unique<GaussianSampler>(covariance_matrix(m.base(), locations), m.describe()));
      mix_.push_back(Mat::Identity(p_, p_));
    } else if (m.family() == KernelFamily::custom_crosscov) {
      detail::check_grid_size(locations.size());
      for (std::size_t k = 0; k < m.W().size(); ++k) {
        const auto N = static_cast<Eigen::Index>(locations.size());
        Mat K(N, N);
        for (Eigen::Index i = 0; i < N; ++i)
          for (Eigen::Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = m.component_kernel(k, locations[i], locations[j]);
        terms_.push_back(std::make_unique<GaussianSampler>(K, m.describe()));
        mix_.push_back(m.W_half()[k]);
      }
    } else {
      throw Error("VectorFieldSampler: model must be chi_lift or custom_crosscov");
    }
    n_ = locations.size();
  }

  int p() const { return p_; }
  std::size_t n_points() const { return n_; }

  template <class Fn>
  void for_each_rep(std::size_t n_reps, std::uint64_t seed, Fn&& fn) const {
    if (terms_.size() == 1) {
      terms_[0]->for_each_rep(n_reps, seed, 0, p_, [&](std::size_t r, const Mat& X) { fn(r, X); });
      return;
    }
    // several independent components: process in fixed chunks to bound memory
    const std::size_t chunk = GaussianSampler::kBatch * 16;
    for (std::size_t r0 = 0; r0 < n_reps; r0 += chunk) {
      const std::size_t cnt = std::min(chunk, n_reps - r0);
      std::vector<Mat> acc(cnt, Mat::Zero(static_cast<Eigen::Index>(n_), p_));
      for (std::size_t k = 0; k < terms_.size(); ++k) {
        const Mat Mk = mix_[k].transpose();
        terms_[k]->for_each_rep(cnt, seed ^ mix64(r0 + 1), 1000 * k, p_,
                                [&](std::size_t r, const Mat& X) { acc[r].noalias() += X * Mk; });
      }
      for (std::size_t r = 0; r < cnt; ++r) fn(r0 + r, static_cast<const Mat&>(acc[r]));
    }
  }

 private:
  int p_;
  std::size_t n_ = 0;
  std::vector<std::unique_ptr<GaussianSampler>> terms_;
  std::vector<Mat> mix_;
};

struct VectorFieldSample {
  int p = 0;
  std::vector<Mat> reps;  // each N x p
};

inline VectorFieldSample sample_vector_field(const CovarianceModel& m, const std::vector<Vec>& locations,
                                             std::size_t n_reps, std::uint64_t seed) {
  VectorFieldSampler vs(m, locations);
  VectorFieldSample out;
  out.p = vs.p();
  out.reps.resize(n_reps);
  vs.for_each_rep(n_reps, seed, [&](std::size_t r, const Mat& X) { out.reps[r] = X; });
  return out;
}

struct ChiSupremum {
  double norm_max = 0.0;  // max_s ||X(s)||
  double lift_max = 0.0;  // max_{s,v} <X(s), v> over the sphere grid
};

inline ChiSupremum chi_lift_supremum(const Mat& X, const std::vector<Vec>& sphere_pts) {
  if (sphere_pts.empty()) throw Error("chi_lift_supremum: empty sphere grid");
  for (const auto& v : sphere_pts)
    if (v.size() != X.cols()) throw Error("chi_lift_supremum: sphere dimension differs from field dimension p");
  ChiSupremum out;
  out.norm_max = X.rowwise().norm().maxCoeff();
  out.lift_max = -std::numeric_limits<double>::infinity();
  for (const auto& v : sphere_pts) out.lift_max = std::max(out.lift_max, (X * v).maxCoeff());
  return out;
}

inline std::vector<ChiSupremum> chi_lift_supremum(const VectorFieldSample& f, const std::vector<Vec>& sphere_pts) {
  std::vector<ChiSupremum> out;
  out.reserve(f.reps.size());
  for (const auto& X : f.reps) out.push_back(chi_lift_supremum(X, sphere_pts));
  return out;
}

struct DependenceRow {
  double x = 0.0;
  double Q = 0.0;  // max |r| over sampled pairs with block-1 separation > x (rescaled)
  std::size_t pairs = 0;
  bool eta_ok = false;  // Q < 1 - 1e-6
};

/*!
 * Q(x) over pairs of M.sample(resolution) at the model's own h, with
 * separation measured on block 1 of the rescaled coordinates.
 */
inline std::vector<DependenceRow> dependence_diagnostic(const CovarianceModel& m, const Manifold& M,
                                                        const std::vector<double>& x_values, int resolution) {
  for (double x : x_values)
    if (!(x > 0.0)) throw Error("dependence_diagnostic: separations must be positive");
  auto pts = M.sample(resolution);
  const Structure& ls = m.location_structure();
  std::vector<DependenceRow> rows;
  for (double x : x_values) rows.push_back({x, 0.0, 0, false});
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const Vec d = m.rescale(pts[i]) - m.rescale(pts[j]);
      const double sep = d.segment(ls.offset(0), ls.block_size(0)).norm();
      double r = -1.0;
      for (auto& row : rows) {
        if (sep > row.x) {
          if (r < 0.0) r = std::abs(m(pts[i], pts[j]));
          row.Q = std::max(row.Q, r);
          ++row.pairs;
        }
      }
    }
  for (auto& row : rows) row.eta_ok = row.Q < 1.0 - 1e-6;
  return rows;
}

struct BermanRow {
  double x, lhs, v;
  bool ok;
};

/// Q(x) (log x)^{2(r1/a1 + r2/a2)} <= v(x) = (log x)^{-beta} at each sampled x > 1.
inline std::vector<BermanRow> berman_check(const std::vector<DependenceRow>& table, double r1, double a1, double r2,
                                           double a2, double beta) {
  std::vector<BermanRow> out;
  for (const auto& row : table) {
    if (!(row.x > 1.0)) continue;
    const double lx = std::log(row.x);
    const double lhs = row.Q * std::pow(lx, 2.0 * (r1 / a1 + r2 / a2));
    const double v = std::pow(lx, -beta);
    out.push_back({row.x, lhs, v, lhs <= v});
  }
  return out;
}

/// (1 - r(t, t+u)) / |D_t xi_h^{-1} u|_{E,alpha}
inline double local_stationarity_ratio(const CovarianceModel& m, const Vec& t, const Vec& u) {
  const Vec tu = t + u;
  const double num = 1.0 - m(t, tu);
  const double den = structure_module(m.D(t) * (m.rescale(tu) - m.rescale(t)), m.structure());
  return num / den;
}

struct EigenBounds {
  double lambda_min = std::numeric_limits<double>::infinity();
  double lambda_max = 0.0;
  bool ok = false;
};

/// Extremes of the spectrum of D_t^T D_t over sampled points against [lo, hi].
inline EigenBounds eigen_bounds_check(const CovarianceModel& m, const std::vector<Vec>& pts, double lo, double hi) {
  EigenBounds b;
  for (const auto& t : pts) {
    const Mat D = m.D(t);
    Eigen::SelfAdjointEigenSolver<Mat> es(D.transpose() * D, Eigen::EigenvaluesOnly);
    b.lambda_min = std::min(b.lambda_min, es.eigenvalues().minCoeff());
    b.lambda_max = std::max(b.lambda_max, es.eigenvalues().maxCoeff());
  }
  b.ok = b.lambda_min >= lo && b.lambda_max <= hi && b.lambda_min > 0.0;
  return b;
}

}  // namespace mext
