#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mext/core_math.hpp"

namespace mext {

enum class ManifoldKind { circle, sphere, flat_torus, interval_product, product };

inline const char* to_string(ManifoldKind k) {
  switch (k) {
    case ManifoldKind::circle: return "circle";
    case ManifoldKind::sphere: return "sphere";
    case ManifoldKind::flat_torus: return "flat_torus";
    case ManifoldKind::interval_product: return "interval_product";
    case ManifoldKind::product: return "product";
  }
  return "?";
}

struct TangentFrame {
  Vec base_point;
  Mat columns;  // n x r, orthonormal
};

struct QuadNode {
  Vec param;
  Vec point;
  double weight;  // parameter weight times sqrt(det(J^T J))
};

/// A point set stepped along the parametrization at (roughly) fixed arc length.
struct ArcGrid {
  std::vector<Vec> points;
  double spacing = 0.0;  // requested spacing
  bool single_point = false;
};

/*!
 * Closed-form compact submanifold. Built-ins:
 *   circle(rho)              S^1 of radius rho in R^2, param theta in [0, 2pi)
 *   sphere(2, rho)           S^2 of radius rho in R^3, params (polar, azimuth);
 *                            frame seams at the two poles
 *   flat_torus(L_1..L_d)     product of circles of circumference L_i in R^{2d}
 *   interval_product(bounds) axis box in R^d (identity chart)
 *   product(A, B)            A x B with concatenated coordinates
 */
class Manifold {
 public:
  static Manifold circle(double radius = 1.0) {
    if (!(radius > 0.0)) throw Error("circle: radius must be positive");
    Manifold m(ManifoldKind::circle, 1, 2, radius);
    m.radius_ = radius;
    return m;
  }

  /// Sphere S^{dim} of the given radius in R^{dim+1}; dim in {1, 2}.
  static Manifold sphere(int dim, double radius = 1.0) {
    if (dim == 1) return circle(radius);
    if (dim != 2) throw Unsupported("sphere: only S^1 and S^2 are built in");
    if (!(radius > 0.0)) throw Error("sphere: radius must be positive");
    Manifold m(ManifoldKind::sphere, 2, 3, radius);
    m.radius_ = radius;
    return m;
  }

  static Manifold flat_torus(std::vector<double> lengths) {
    if (lengths.empty()) throw Error("flat_torus: needs at least one length");
    double reach = std::numeric_limits<double>::infinity();
    for (double L : lengths) {
      if (!(L > 0.0)) throw Error("flat_torus: lengths must be positive");
      reach = std::min(reach, L / (2.0 * kPi));
    }
    const int d = static_cast<int>(lengths.size());
    Manifold m(ManifoldKind::flat_torus, d, 2 * d, reach);
    m.lengths_ = std::move(lengths);
    return m;
  }

  static Manifold interval_product(std::vector<std::pair<double, double>> bounds) {
    if (bounds.empty()) throw Error("interval_product: needs at least one interval");
    for (auto& b : bounds)
      if (!(b.second > b.first)) throw Error("interval_product: each interval needs lo < hi");
    const int d = static_cast<int>(bounds.size());
    Manifold m(ManifoldKind::interval_product, d, d, std::numeric_limits<double>::infinity());
    m.bounds_ = std::move(bounds);
    return m;
  }

  static Manifold product(const Manifold& a, const Manifold& b) {
    Manifold m(ManifoldKind::product, a.r_ + b.r_, a.n_ + b.n_, std::min(a.reach_, b.reach_));
    m.left_ = std::make_shared<const Manifold>(a);
    m.right_ = std::make_shared<const Manifold>(b);
    return m;
  }

  ManifoldKind kind() const { return kind_; }
  int intrinsic_dim() const { return r_; }
  int ambient_dim() const { return n_; }
  double reach() const { return reach_; }
  double radius() const { return radius_; }
  const std::vector<double>& lengths() const { return lengths_; }
  const std::vector<std::pair<double, double>>& bounds() const { return bounds_; }
  const Manifold& left() const { return *left_; }
  const Manifold& right() const { return *right_; }
  bool is_product() const { return kind_ == ManifoldKind::product; }

  std::string describe() const {
    std::ostringstream os;
    switch (kind_) {
      case ManifoldKind::circle: os << "circle(" << radius_ << ")"; break;
      case ManifoldKind::sphere: os << "sphere(2," << radius_ << ")"; break;
      case ManifoldKind::flat_torus:
        os << "flat_torus(";
        for (std::size_t i = 0; i < lengths_.size(); ++i) os << (i ? "," : "") << lengths_[i];
        os << ")";
        break;
      case ManifoldKind::interval_product:
        os << "interval_product(";
        for (std::size_t i = 0; i < bounds_.size(); ++i)
          os << (i ? "," : "") << "[" << bounds_[i].first << "," << bounds_[i].second << "]";
        os << ")";
        break;
      case ManifoldKind::product: os << left_->describe() << "x" << right_->describe(); break;
    }
    return os.str();
  }

  /// Hausdorff measure H_r(M), analytic for built-ins.
  double volume() const {
    switch (kind_) {
      case ManifoldKind::circle: return 2.0 * kPi * radius_;
      case ManifoldKind::sphere: return 4.0 * kPi * radius_ * radius_;
      case ManifoldKind::flat_torus: {
        double v = 1.0;
        for (double L : lengths_) v *= L;
        return v;
      }
      case ManifoldKind::interval_product: {
        double v = 1.0;
        for (auto& b : bounds_) v *= b.second - b.first;
        return v;
      }
      case ManifoldKind::product: return left_->volume() * right_->volume();
    }
    return 0.0;
  }

  double diameter() const {
    switch (kind_) {
      case ManifoldKind::circle:
      case ManifoldKind::sphere: return 2.0 * radius_;
      case ManifoldKind::flat_torus: {
        double s = 0.0;
        for (double L : lengths_) s += std::pow(L / kPi, 2);
        return std::sqrt(s);
      }
      case ManifoldKind::interval_product: {
        double s = 0.0;
        for (auto& b : bounds_) s += std::pow(b.second - b.first, 2);
        return std::sqrt(s);
      }
      case ManifoldKind::product:
        return std::hypot(left_->diameter(), right_->diameter());
    }
    return 0.0;
  }

  Vec embed(const Vec& q) const {
    check_param(q);
    Vec x(n_);
    switch (kind_) {
      case ManifoldKind::circle:
        x << radius_ * std::cos(q(0)), radius_ * std::sin(q(0));
        break;
      case ManifoldKind::sphere:
        x << radius_ * std::sin(q(0)) * std::cos(q(1)), radius_ * std::sin(q(0)) * std::sin(q(1)),
            radius_ * std::cos(q(0));
        break;
      case ManifoldKind::flat_torus:
        for (int i = 0; i < r_; ++i) {
          const double rho = lengths_[i] / (2.0 * kPi);
          x(2 * i) = rho * std::cos(q(i));
          x(2 * i + 1) = rho * std::sin(q(i));
        }
        break;
      case ManifoldKind::interval_product: x = q; break;
      case ManifoldKind::product:
        x << left_->embed(q.head(left_->r_)), right_->embed(q.tail(right_->r_));
        break;
    }
    return x;
  }

  /// n x r Jacobian of the chart.
  Mat jacobian(const Vec& q) const {
    check_param(q);
    Mat J = Mat::Zero(n_, r_);
    switch (kind_) {
      case ManifoldKind::circle:
        J << -radius_ * std::sin(q(0)), radius_ * std::cos(q(0));
        break;
      case ManifoldKind::sphere: {
        const double st = std::sin(q(0)), ct = std::cos(q(0));
        const double sp = std::sin(q(1)), cp = std::cos(q(1));
        J << radius_ * ct * cp, -radius_ * st * sp, radius_ * ct * sp, radius_ * st * cp,
            -radius_ * st, 0.0;
        break;
      }
      case ManifoldKind::flat_torus:
        for (int i = 0; i < r_; ++i) {
          const double rho = lengths_[i] / (2.0 * kPi);
          J(2 * i, i) = -rho * std::sin(q(i));
          J(2 * i + 1, i) = rho * std::cos(q(i));
        }
        break;
      case ManifoldKind::interval_product: J.setIdentity(); break;
      case ManifoldKind::product:
        J.topLeftCorner(left_->n_, left_->r_) = left_->jacobian(q.head(left_->r_));
        J.bottomRightCorner(right_->n_, right_->r_) = right_->jacobian(q.tail(right_->r_));
        break;
    }
    return J;
  }

  /// Inverse chart for an ambient point on M; throws if x is farther than tol from M.
  Vec locate(const Vec& x, double tol = 1e-8) const {
    if (x.size() != n_) throw Error("locate: ambient dimension mismatch for " + describe());
    Vec q(r_);
    auto off_manifold = [&] {
      std::ostringstream os;
      os << "point is not on " << describe() << " (tolerance " << tol << ")";
      return Error(os.str());
    };
    switch (kind_) {
      case ManifoldKind::circle: {
        if (std::abs(x.norm() - radius_) > tol * std::max(1.0, radius_)) throw off_manifold();
        q(0) = wrap(std::atan2(x(1), x(0)));
        break;
      }
      case ManifoldKind::sphere: {
        const double nr = x.norm();
        if (std::abs(nr - radius_) > tol * std::max(1.0, radius_)) throw off_manifold();
        q(0) = std::acos(std::clamp(x(2) / nr, -1.0, 1.0));
        q(1) = wrap(std::atan2(x(1), x(0)));
        break;
      }
      case ManifoldKind::flat_torus:
        for (int i = 0; i < r_; ++i) {
          const double rho = lengths_[i] / (2.0 * kPi);
          if (std::abs(std::hypot(x(2 * i), x(2 * i + 1)) - rho) > tol * std::max(1.0, rho))
            throw off_manifold();
          q(i) = wrap(std::atan2(x(2 * i + 1), x(2 * i)));
        }
        break;
      case ManifoldKind::interval_product:
        for (int i = 0; i < r_; ++i) {
          if (x(i) < bounds_[i].first - tol || x(i) > bounds_[i].second + tol) throw off_manifold();
          q(i) = std::clamp(x(i), bounds_[i].first, bounds_[i].second);
        }
        break;
      case ManifoldKind::product:
        q << left_->locate(x.head(left_->n_), tol), right_->locate(x.tail(right_->n_), tol);
        break;
    }
    return q;
  }

  /*!
   * Orthonormal tangent frame at an ambient point of M. Built from the
   * analytic chart derivatives with fixed column order; on the sphere the
   * columns are the polar and azimuthal unit vectors, which are well defined
   * away from the poles (at a pole the azimuth defaults to 0).
   */
  TangentFrame tangent_frame(const Vec& x) const {
    const Vec q = locate(x);
    TangentFrame f;
    f.base_point = x;
    f.columns = frame_at(q);
    return f;
  }

  Mat frame_at(const Vec& q) const {
    Mat P = Mat::Zero(n_, r_);
    switch (kind_) {
      case ManifoldKind::sphere: {
        const double st = std::sin(q(0)), ct = std::cos(q(0));
        const double sp = std::sin(q(1)), cp = std::cos(q(1));
        P << ct * cp, -sp, ct * sp, cp, -st, 0.0;
        break;
      }
      case ManifoldKind::product:
        P.topLeftCorner(left_->n_, left_->r_) = left_->frame_at(q.head(left_->r_));
        P.bottomRightCorner(right_->n_, right_->r_) = right_->frame_at(q.tail(right_->r_));
        break;
      default: P = gram_schmidt(jacobian(q)); break;
    }
    return P;
  }

  /*!
   * Tensorized quadrature nodes for integrals against H_r. Periodic
   * directions use the trapezoid rule with `resolution` nodes; the sphere's
   * polar angle and interval directions use the midpoint rule.
   */
  std::vector<QuadNode> quadrature(int resolution) const {
    if (resolution < 8) throw Error("quadrature: resolution must be at least 8");
    std::vector<QuadNode> out;
    switch (kind_) {
      case ManifoldKind::product: {
        auto a = left_->quadrature(resolution);
        auto b = right_->quadrature(resolution);
        out.reserve(a.size() * b.size());
        for (auto& na : a)
          for (auto& nb : b) {
            QuadNode nd;
            nd.param.resize(r_);
            nd.param << na.param, nb.param;
            nd.point.resize(n_);
            nd.point << na.point, nb.point;
            nd.weight = na.weight * nb.weight;
            out.push_back(std::move(nd));
          }
        return out;
      }
      case ManifoldKind::sphere: {
        const int nt = std::max(4, resolution / 2), np = resolution;
        for (int i = 0; i < nt; ++i)
          for (int j = 0; j < np; ++j) {
            Vec q(2);
            q << (i + 0.5) * kPi / nt, 2.0 * kPi * j / np;
            out.push_back(node(q, (kPi / nt) * (2.0 * kPi / np)));
          }
        return out;
      }
      default: break;
    }
    // circle, torus, box: tensor of 1-D rules
    std::vector<std::vector<double>> nodes(r_), weights(r_);
    for (int i = 0; i < r_; ++i) {
      if (kind_ == ManifoldKind::interval_product) {
        const double lo = bounds_[i].first, w = (bounds_[i].second - lo) / resolution;
        for (int k = 0; k < resolution; ++k) {
          nodes[i].push_back(lo + (k + 0.5) * w);
          weights[i].push_back(w);
        }
      } else {
        for (int k = 0; k < resolution; ++k) {
          nodes[i].push_back(2.0 * kPi * k / resolution);
          weights[i].push_back(2.0 * kPi / resolution);
        }
      }
    }
    for_each_tensor(nodes, weights, [&](const Vec& q, double w) { out.push_back(node(q, w)); });
    return out;
  }

  /// Quasi-uniform dense sample of M (candidate set for nets and Voronoi).
  std::vector<Vec> sample(int resolution) const {
    std::vector<Vec> out;
    switch (kind_) {
      case ManifoldKind::circle:
        for (int k = 0; k < resolution; ++k) {
          Vec q(1);
          q << 2.0 * kPi * k / resolution;
          out.push_back(embed(q));
        }
        return out;
      case ManifoldKind::sphere: {
        const double golden = kPi * (3.0 - std::sqrt(5.0));
        for (int k = 0; k < resolution; ++k) {
          const double z = 1.0 - (2.0 * k + 1.0) / resolution;
          const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
          Vec x(3);
          x << rho * std::cos(golden * k), rho * std::sin(golden * k), z;
          out.push_back(radius_ * x);
        }
        return out;
      }
      case ManifoldKind::product: {
        auto a = left_->sample(resolution);
        auto b = right_->sample(resolution);
        for (auto& xa : a)
          for (auto& xb : b) {
            Vec x(n_);
            x << xa, xb;
            out.push_back(std::move(x));
          }
        return out;
      }
      default: break;
    }
    std::vector<std::vector<double>> nodes(r_), weights(r_);
    for (int i = 0; i < r_; ++i)
      for (int k = 0; k < resolution; ++k) {
        if (kind_ == ManifoldKind::interval_product) {
          const double lo = bounds_[i].first, hi = bounds_[i].second;
          nodes[i].push_back(resolution == 1 ? lo : lo + (hi - lo) * k / (resolution - 1));
        } else {
          nodes[i].push_back(2.0 * kPi * k / resolution);
        }
        weights[i].push_back(1.0);
      }
    for_each_tensor(nodes, weights, [&](const Vec& q, double) { out.push_back(embed(q)); });
    return out;
  }

  /*!
   * Points stepped at arc-length increments of at most `spacing`. If spacing
   * exceeds the diameter the grid collapses to one point and is flagged.
   */
  ArcGrid arc_grid(double spacing) const {
    if (!(spacing > 0.0)) throw Error("arc_grid: spacing must be positive");
    ArcGrid g;
    g.spacing = spacing;
    if (spacing > diameter()) {
      g.single_point = true;
      g.points.push_back(embed(Vec::Zero(r_)));
      return g;
    }
    switch (kind_) {
      case ManifoldKind::circle: {
        const int n = static_cast<int>(std::ceil(2.0 * kPi * radius_ / spacing - 1e-9));
        for (int k = 0; k < n; ++k) {
          Vec q(1);
          q << 2.0 * kPi * k / n;
          g.points.push_back(embed(q));
        }
        return g;
      }
      case ManifoldKind::sphere: {
        const int nt = static_cast<int>(std::ceil(kPi * radius_ / spacing - 1e-9));
        for (int i = 0; i < nt; ++i) {
          const double t = (i + 0.5) * kPi / nt;
          const int np =
              std::max(1, static_cast<int>(std::ceil(2.0 * kPi * radius_ * std::sin(t) / spacing - 1e-9)));
          for (int j = 0; j < np; ++j) {
            Vec q(2);
            q << t, 2.0 * kPi * j / np;
            g.points.push_back(embed(q));
          }
        }
        return g;
      }
      case ManifoldKind::product: {
        auto a = left_->arc_grid(spacing);
        auto b = right_->arc_grid(spacing);
        g.single_point = a.single_point && b.single_point;
        for (auto& xa : a.points)
          for (auto& xb : b.points) {
            Vec x(n_);
            x << xa, xb;
            g.points.push_back(std::move(x));
          }
        return g;
      }
      default: break;
    }
    std::vector<std::vector<double>> nodes(r_), weights(r_);
    for (int i = 0; i < r_; ++i) {
      if (kind_ == ManifoldKind::interval_product) {
        const double lo = bounds_[i].first, len = bounds_[i].second - lo;
        const int n = static_cast<int>(std::ceil(len / spacing - 1e-9));
        for (int k = 0; k <= n; ++k) nodes[i].push_back(lo + len * k / n);
      } else {
        const int n = static_cast<int>(std::ceil(lengths_[i] / spacing - 1e-9));
        for (int k = 0; k < n; ++k) nodes[i].push_back(2.0 * kPi * k / n);
      }
      weights[i].assign(nodes[i].size(), 1.0);
    }
    for_each_tensor(nodes, weights, [&](const Vec& q, double) { g.points.push_back(embed(q)); });
    return g;
  }

 private:
  Manifold(ManifoldKind k, int r, int n, double reach) : kind_(k), r_(r), n_(n), reach_(reach) {}

  static double wrap(double a) {
    a = std::fmod(a, 2.0 * kPi);
    return a < 0.0 ? a + 2.0 * kPi : a;
  }

  void check_param(const Vec& q) const {
    if (q.size() != r_) throw Error("parameter dimension mismatch for " + describe());
  }

  QuadNode node(const Vec& q, double w) const {
    const Mat J = jacobian(q);
    QuadNode nd;
    nd.param = q;
    nd.point = embed(q);
    nd.weight = w * std::sqrt(std::max(0.0, (J.transpose() * J).determinant()));
    return nd;
  }

  static Mat gram_schmidt(const Mat& J) {
    Mat P = J;
    for (Eigen::Index c = 0; c < P.cols(); ++c) {
      for (Eigen::Index d = 0; d < c; ++d) P.col(c) -= P.col(d).dot(P.col(c)) * P.col(d);
      const double nr = P.col(c).norm();
      if (nr < 1e-14) throw Error("tangent frame: degenerate chart derivative");
      P.col(c) /= nr;
    }
    return P;
  }

  template <class Fn>
  static void for_each_tensor(const std::vector<std::vector<double>>& nodes,
                              const std::vector<std::vector<double>>& weights, Fn&& fn) {
    const std::size_t d = nodes.size();
    std::vector<std::size_t> idx(d, 0);
    Vec q(static_cast<Eigen::Index>(d));
    while (true) {
      double w = 1.0;
      for (std::size_t i = 0; i < d; ++i) {
        q(static_cast<Eigen::Index>(i)) = nodes[i][idx[i]];
        w *= weights[i][idx[i]];
      }
      fn(q, w);
      std::size_t i = d;
      while (i > 0) {
        --i;
        if (++idx[i] < nodes[i].size()) break;
        idx[i] = 0;
        if (i == 0) return;
      }
      if (d == 0) return;
    }
  }

  ManifoldKind kind_;
  int r_ = 0;
  int n_ = 0;
  double reach_ = 0.0;
  double radius_ = 0.0;
  std::vector<double> lengths_;
  std::vector<std::pair<double, double>> bounds_;
  std::shared_ptr<const Manifold> left_, right_;
};

inline TangentFrame tangent_frame(const Manifold& M, const Vec& x) { return M.tangent_frame(x); }

template <class Fn>
double hausdorff_integral(const Manifold& M, Fn&& f, int resolution) {
  double acc = 0.0;
  for (const auto& nd : M.quadrature(resolution)) acc += nd.weight * f(nd.point);
  return acc;
}

/*!
 * Quasi-uniform points on S^{p-1}: {+1, -1} for p = 1, uniform angles for
 * p = 2, a Fibonacci lattice for p = 3.
 */
inline std::vector<Vec> sphere_grid(int p, int resolution) {
  if (resolution < 1) throw Error("sphere_grid: resolution must be positive");
  std::vector<Vec> out;
  if (p == 1) {
    out.push_back(Vec::Constant(1, 1.0));
    out.push_back(Vec::Constant(1, -1.0));
    return out;
  }
  if (p == 2) {
    for (int k = 0; k < resolution; ++k) {
      Vec v(2);
      v << std::cos(2.0 * kPi * k / resolution), std::sin(2.0 * kPi * k / resolution);
      out.push_back(v);
    }
    return out;
  }
  if (p == 3) return Manifold::sphere(2).sample(resolution);
  throw Unsupported("sphere_grid: p > 3 is not supported");
}

}  // namespace mext
