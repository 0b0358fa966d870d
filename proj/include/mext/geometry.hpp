#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "mext/core_math.hpp"
#include "mext/manifold.hpp"

namespace mext {

struct EpsilonNet {
  Manifold manifold;
  double epsilon = 0.0;
  std::vector<Vec> points;
  std::vector<std::size_t> candidate_index;  // position of each net point in the candidate sample
  std::vector<Vec> candidates;
};

struct NetCertificate {
  double covering_radius = 0.0;  // max over reference points of distance to the net
  double min_separation = 0.0;   // min pairwise net distance
  bool covering_ok = false;
  bool packing_ok = false;
  std::size_t n_reference = 0;
  bool ok() const { return covering_ok && packing_ok; }
};

/// Largest nearest-neighbour distance within a point set (brute force).
inline double max_nn_gap(const std::vector<Vec>& pts) {
  double worst = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i == j) continue;
      best = std::min(best, (pts[i] - pts[j]).squaredNorm());
    }
    if (std::isfinite(best)) worst = std::max(worst, best);
  }
  return std::sqrt(worst);
}

/// Nearest point index, ties to the lowest index.
inline std::size_t nearest_index(const std::vector<Vec>& pts, const Vec& x, double* dist = nullptr) {
  if (pts.empty()) throw Error("nearest_index: empty point set");
  std::size_t best = 0;
  double bd = (pts[0] - x).squaredNorm();
  for (std::size_t j = 1; j < pts.size(); ++j) {
    double d = (pts[j] - x).squaredNorm();
    if (d < bd) {
      bd = d;
      best = j;
    }
  }
  if (dist) *dist = std::sqrt(bd);
  return best;
}

/*!
 * Greedy farthest-point eps-net over M.sample(candidate_resolution), started
 * from candidate 0. Every accepted point is > eps from the previous ones and
 * the loop stops once all candidates are within eps, so both net properties
 * hold on the candidate set by construction. Off the candidate set the
 * covering radius is only bounded by eps plus the candidate gap.
 */
inline EpsilonNet build_epsilon_net(const Manifold& M, double epsilon, int candidate_resolution) {
  if (!(epsilon > 0.0)) throw Error("build_epsilon_net: epsilon must be positive");
  if (!(epsilon < M.reach() / 2.0)) {
    std::ostringstream os;
    os << "build_epsilon_net: epsilon = " << epsilon << " must be below reach/2 = " << M.reach() / 2.0
       << " for " << M.describe();
    throw Error(os.str());
  }
  EpsilonNet net{M, epsilon, {}, {}, M.sample(candidate_resolution)};
  const auto& cand = net.candidates;
  if (cand.size() < 2) throw Error("build_epsilon_net: candidate sample too small");
  const double gap = max_nn_gap(cand);
  if (gap > epsilon / 4.0) {
    std::ostringstream os;
    os << "build_epsilon_net: candidate sample too coarse (spacing " << gap << " > eps/4 = " << epsilon / 4.0
       << "); raise candidate_resolution";
    throw Error(os.str());
  }

  std::vector<double> d(cand.size(), std::numeric_limits<double>::infinity());
  std::size_t next = 0;
  while (true) {
    const std::size_t added = next;
    net.candidate_index.push_back(added);
    net.points.push_back(cand[added]);
    double far = -1.0;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      d[i] = std::min(d[i], (cand[i] - cand[added]).norm());
      if (d[i] > far) {
        far = d[i];
        next = i;
      }
    }
    if (far <= epsilon) break;
  }
  return net;
}

/// Literal covering and packing checks of a net against a reference sample.
inline NetCertificate certify_net(const EpsilonNet& net, const std::vector<Vec>& reference) {
  NetCertificate c;
  c.n_reference = reference.size();
  for (const auto& x : reference) {
    double d;
    nearest_index(net.points, x, &d);
    c.covering_radius = std::max(c.covering_radius, d);
  }
  c.min_separation = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < net.points.size(); ++i)
    for (std::size_t j = i + 1; j < net.points.size(); ++j)
      c.min_separation = std::min(c.min_separation, (net.points[i] - net.points[j]).norm());
  c.covering_ok = c.covering_radius <= net.epsilon;
  c.packing_ok = c.min_separation > net.epsilon;
  return c;
}

/// H_r(M) / (cos^r(theta) eps^r B_r) with theta = arcsin(eps/2).
inline double packing_bound(const Manifold& M, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < M.reach() / 2.0))
    throw Error("packing_bound: requires 0 < epsilon < reach/2");
  const int r = M.intrinsic_dim();
  const double c = std::cos(std::asin(epsilon / 2.0));
  return M.volume() / (std::pow(c, r) * std::pow(epsilon, r) * unit_ball_volume(r));
}

/*!
 * Disjoint-ball count bound: eps-separated points carry disjoint balls of
 * radius eps/2, each holding at least cos^r(theta) (eps/2)^r B_r of H_r(M)
 * with theta = arcsin(eps / (4 reach)).
 */
inline double packing_bound_half_radius(const Manifold& M, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < M.reach() / 2.0))
    throw Error("packing_bound_half_radius: requires 0 < epsilon < reach/2");
  const int r = M.intrinsic_dim();
  const double th = std::isfinite(M.reach()) ? std::asin(epsilon / (4.0 * M.reach())) : 0.0;
  const double rad = epsilon / 2.0;
  return M.volume() / (std::pow(std::cos(th), r) * std::pow(rad, r) * unit_ball_volume(r));
}

struct VoronoiPartition {
  std::vector<Vec> seeds;
  std::vector<Vec> sample;
  std::vector<std::size_t> assignment;  // sample index -> seed index
  std::vector<double> distance;         // distance to the assigned seed

  std::vector<std::size_t> cell_sizes() const {
    std::vector<std::size_t> n(seeds.size(), 0);
    for (auto a : assignment) ++n[a];
    return n;
  }
};

inline VoronoiPartition restricted_voronoi(const EpsilonNet& net, const std::vector<Vec>& sample) {
  if (net.points.empty()) throw Error("restricted_voronoi: empty net");
  VoronoiPartition v;
  v.seeds = net.points;
  v.sample = sample;
  v.assignment.resize(sample.size());
  v.distance.resize(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i)
    v.assignment[i] = nearest_index(net.points, sample[i], &v.distance[i]);
  return v;
}

struct SandwichReport {
  std::size_t inner_violations = 0;  // points within eps/2 of seed j but assigned elsewhere
  std::size_t outer_violations = 0;  // points assigned to a seed farther than eps
  bool ok() const { return inner_violations == 0 && outer_violations == 0; }
};

inline SandwichReport check_sandwich(const VoronoiPartition& v, double epsilon) {
  SandwichReport r;
  for (std::size_t i = 0; i < v.sample.size(); ++i) {
    if (v.distance[i] > epsilon) ++r.outer_violations;
    for (std::size_t j = 0; j < v.seeds.size(); ++j)
      if ((v.sample[i] - v.seeds[j]).norm() < epsilon / 2.0 && v.assignment[i] != j) ++r.inner_violations;
  }
  return r;
}

/*!
 * Connected components of each cell in the sample adjacency graph, where two
 * sample points are adjacent when closer than `link`.
 */
inline std::vector<int> cell_components(const VoronoiPartition& v, double link) {
  std::vector<std::vector<std::size_t>> members(v.seeds.size());
  for (std::size_t i = 0; i < v.assignment.size(); ++i) members[v.assignment[i]].push_back(i);
  std::vector<int> out(v.seeds.size(), 0);
  for (std::size_t c = 0; c < members.size(); ++c) {
    const auto& mem = members[c];
    std::vector<std::size_t> parent(mem.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t a) {
      while (parent[a] != a) a = parent[a] = parent[parent[a]];
      return a;
    };
    for (std::size_t a = 0; a < mem.size(); ++a)
      for (std::size_t b = a + 1; b < mem.size(); ++b)
        if ((v.sample[mem[a]] - v.sample[mem[b]]).norm() < link) parent[find(a)] = find(b);
    int k = 0;
    for (std::size_t a = 0; a < mem.size(); ++a)
      if (find(a) == a) ++k;
    out[c] = k;
  }
  return out;
}

struct DiscretizationGrid {
  Structure structure;
  double h = 0.0, gamma = 0.0, theta = 0.0;
  std::vector<Vec> points;
  std::vector<double> spacings;       // per block
  std::vector<std::size_t> counts;    // per block factor
  std::vector<bool> single_point;     // per block factor
};

/*!
 * Grid on M (a product of two factors, or a single factor for a one-block
 * structure) stepping factor 1 at h*gamma*theta^{-2/alpha_1} and factor 2 at
 * gamma*theta^{-2/alpha_2}.
 */
inline DiscretizationGrid build_discretization_grid(const Manifold& M, const Structure& s, double h,
                                                    double gamma, double theta) {
  Violations v;
  v.check(h > 0.0 && h <= 1.0, "h must lie in (0,1]");
  v.check(gamma > 0.0, "gamma must be positive");
  v.check(theta > 0.0, "theta must be positive");
  v.check(s.blocks() == 1 || s.blocks() == 2, "structure must have one or two blocks");
  std::vector<const Manifold*> factors;
  if (s.blocks() == 2) {
    v.check(M.is_product(), "two-block structure needs a product manifold");
    if (M.is_product()) factors = {&M.left(), &M.right()};
  } else {
    factors = {&M};
  }
  for (std::size_t i = 0; i < factors.size() && v.empty(); ++i) {
    v.check(factors[i]->ambient_dim() == s.block_size(static_cast<int>(i)),
            "factor ambient dimension must equal block size e_i");
    v.check(factors[i]->intrinsic_dim() == s.manifold_dim(static_cast<int>(i)),
            "factor intrinsic dimension must equal r_i");
  }
  v.throw_if_any("build_discretization_grid");

  DiscretizationGrid g;
  g.structure = s;
  g.h = h;
  g.gamma = gamma;
  g.theta = theta;
  std::vector<ArcGrid> parts;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    double sp = gamma * std::pow(theta, -2.0 / s.exponent(static_cast<int>(i)));
    if (i == 0) sp *= h;
    g.spacings.push_back(sp);
    parts.push_back(factors[i]->arc_grid(sp));
    g.counts.push_back(parts.back().points.size());
    g.single_point.push_back(parts.back().single_point);
  }
  if (parts.size() == 1) {
    g.points = std::move(parts[0].points);
  } else {
    for (auto& a : parts[0].points)
      for (auto& b : parts[1].points) {
        Vec x(a.size() + b.size());
        x << a, b;
        g.points.push_back(std::move(x));
      }
  }
  return g;
}

}  // namespace mext
